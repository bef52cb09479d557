"""Report figures rendered straight to files with the Agg backend.

Figures are built on :class:`matplotlib.figure.Figure` directly, so nothing
touches pyplot's global state and the module is safe in headless runs.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .imaging import Raster, false_color
from .metrics import IDEAL, METRIC_NAMES

LABELS = {"ergas": "ERGAS", "sam": "SAM", "uiqi": "UIQI", "scc": "SCC", "ssim": "SSIM"}
STYLE = {"font.size": 9}


def _save(fig: Figure, path, dpi=120) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=dpi, bbox_inches="tight")


def metric_bars(rows: Sequence, path) -> None:
    """One panel per metric, one bar per method; the ideal value is dashed.

    ``rows`` is a sequence of ``(method, MetricReport)`` pairs.
    """
    if not rows:
        raise ValueError("nothing to plot")
    names = [n for n, _ in rows]
    fig = Figure(figsize=(2.2 * len(METRIC_NAMES), 2.6))
    axes = fig.subplots(1, len(METRIC_NAMES))
    x = np.arange(len(names))
    for ax, key in zip(axes, METRIC_NAMES):
        vals = [getattr(rep, key) for _, rep in rows]
        ax.bar(x, vals, color="0.55", edgecolor="k", linewidth=0.5)
        ax.axhline(IDEAL[key], color="C3", linestyle="--", linewidth=0.8)
        ax.set_title(LABELS[key], fontsize=STYLE["font.size"])
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
        ax.tick_params(axis="y", labelsize=7)
    fig.tight_layout()
    _save(fig, path)


def preview_panel(images: Mapping[str, Raster], path) -> None:
    """Side-by-side false-colour previews (bands 3, 2, 1)."""
    if not images:
        raise ValueError("nothing to plot")
    fig = Figure(figsize=(2.4 * len(images), 2.6))
    axes = np.atleast_1d(fig.subplots(1, len(images)))
    for ax, (title, r) in zip(axes, images.items()):
        ax.imshow(false_color(r).values, interpolation="nearest")
        ax.set_title(title, fontsize=STYLE["font.size"])
        ax.set_axis_off()
    fig.tight_layout()
    _save(fig, path)


def loss_curve(steps: Sequence[int], losses: Sequence[float], path, window: int = 50) -> None:
    """Per-step L1 loss with a trailing moving average."""
    if len(steps) == 0:
        raise ValueError("empty training log")
    steps = np.asarray(steps)
    losses = np.asarray(losses, dtype=np.float64)
    fig = Figure(figsize=(4.5, 3.0))
    ax = fig.subplots()
    ax.plot(steps, losses, color="0.7", linewidth=0.6, label="step")
    if len(losses) >= window:
        smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
        ax.plot(steps[window - 1 :], smooth, color="k", linewidth=1.0, label=f"{window}-step mean")
    ax.set_xlabel("step")
    ax.set_ylabel("L1 loss")
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    _save(fig, path)
