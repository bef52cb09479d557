"""Reference-based pansharpening quality metrics.

All functions take ``(fused, ref)`` Rasters (or H x W x C arrays) in the same
units, normally normalized to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .imaging.raster import Raster

LAPLACIAN_8 = np.array([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]])
METRIC_NAMES = ("ergas", "sam", "uiqi", "scc", "ssim")
IDEAL = {"ergas": 0.0, "sam": 0.0, "uiqi": 1.0, "scc": 1.0, "ssim": 1.0}

# variance sums below this are treated as flat windows
_FLAT = 1e-12


class MetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


@dataclass(frozen=True)
class MetricConfig:
    resolution_ratio: float = 0.25
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_c1: float = 0.01 ** 2
    ssim_c2: float = 0.03 ** 2
    uiqi_window: int = 8
    uiqi_global: bool = False
    sam_unit: str = "radians"

    def __post_init__(self):
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError(f"SSIM window must be odd and >= 3, got {self.ssim_window}")
        # the Wang-Bovik Q window is conventionally 8x8, so evenness is allowed
        if self.uiqi_window < 2:
            raise ValueError(f"UIQI window must be >= 2, got {self.uiqi_window}")
        if self.ssim_c1 <= 0 or self.ssim_c2 <= 0:
            raise ValueError("SSIM constants must be positive")
        if self.sam_unit not in ("radians", "degrees"):
            raise ValueError(f"unknown SAM unit {self.sam_unit!r}")
        if self.resolution_ratio <= 0:
            raise ValueError("resolution ratio must be positive")


@dataclass(frozen=True)
class MetricReport:
    ergas: float
    sam: float
    uiqi: float
    scc: float
    ssim: float
    sam_excluded: int = field(default=0, compare=False)

    def values(self) -> tuple:
        return tuple(getattr(self, k) for k in METRIC_NAMES)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def ideal(cls) -> "MetricReport":
        return cls(**IDEAL)


def _arrays(fused, ref):
    f = fused.values if isinstance(fused, Raster) else np.asarray(fused, dtype=np.float64)
    r = ref.values if isinstance(ref, Raster) else np.asarray(ref, dtype=np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    if r.ndim == 2:
        r = r[:, :, None]
    if f.shape != r.shape:
        raise MetricError(f"dimension mismatch: fused {f.shape} vs reference {r.shape}")
    return f, r


def ergas(fused, ref, cfg: MetricConfig = MetricConfig()) -> float:
    f, r = _arrays(fused, ref)
    means = r.mean(axis=(0, 1))
    if np.any(means == 0):
        raise MetricError(f"reference band(s) {np.flatnonzero(means == 0).tolist()} have zero mean")
    rmse = np.sqrt(((f - r) ** 2).mean(axis=(0, 1)))
    return float(100.0 * cfg.resolution_ratio * np.sqrt(np.mean((rmse / means) ** 2)))


def spectral_angles(fused, ref):
    """Per-pixel spectral angle in radians and the mask of valid pixels.

    Pixels where either spectrum has zero norm are invalid. The angle is
    computed as ``2 * atan2(|u - v|, |u + v|)`` on unit vectors, which stays
    accurate near zero where ``arccos`` loses half its digits.
    """
    f, r = _arrays(fused, ref)
    nf = np.linalg.norm(f, axis=2)
    nr = np.linalg.norm(r, axis=2)
    valid = (nf > 0) & (nr > 0)
    u = r[valid] / nr[valid][:, None]
    v = f[valid] / nf[valid][:, None]
    angles = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))
    return angles, valid


def sam(fused, ref, cfg: MetricConfig = MetricConfig(), return_excluded: bool = False):
    f, r = _arrays(fused, ref)
    if f.shape[2] < 2:
        raise MetricError("SAM needs at least two bands")
    angles, valid = spectral_angles(f, r)
    excluded = int(valid.size - valid.sum())
    value = float(angles.mean()) if angles.size else 0.0
    if cfg.sam_unit == "degrees":
        value = math.degrees(value)
    return (value, excluded) if return_excluded else value


def _q_map(mx, my, vx, vy, cxy):
    """Wang-Bovik Q with the usual conventions for flat windows."""
    den_var = vx + vy
    den_mean = mx ** 2 + my ** 2
    q = np.ones_like(mx)
    full = (den_var > _FLAT) & (den_mean > 0)
    q[full] = 4.0 * cxy[full] * mx[full] * my[full] / (den_var[full] * den_mean[full])
    flat = (den_var <= _FLAT) & (den_mean > 0)
    q[flat] = 2.0 * mx[flat] * my[flat] / den_mean[flat]
    dark = (den_var > _FLAT) & (den_mean == 0)
    q[dark] = 2.0 * cxy[dark] / den_var[dark]
    return q


def _window_moments(x, y, size):
    """Box-window means, variances and covariance over all valid windows."""
    taps = np.full(size, 1.0 / size)

    def box(img):
        return _separable_valid(img, taps)

    mx, my = box(x), box(y)
    vx = box(x * x) - mx * mx
    vy = box(y * y) - my * my
    cxy = box(x * y) - mx * my
    return mx, my, vx, vy, cxy


def uiqi(fused, ref, cfg: MetricConfig = MetricConfig()) -> float:
    """Universal image quality index averaged over windows and bands."""
    f, r = _arrays(fused, ref)
    per_band = []
    for b in range(f.shape[2]):
        x, y = r[:, :, b], f[:, :, b]
        if cfg.uiqi_global:
            stats = [np.array([s]) for s in _global_moments(x, y)]
        else:
            size = cfg.uiqi_window
            if min(x.shape) < size:
                raise MetricError(f"image {x.shape} smaller than UIQI window {size}")
            stats = _window_moments(x, y, size)
        per_band.append(_q_map(*stats).mean())
    return float(np.mean(per_band))


def _global_moments(x, y):
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    return mx, my, (dx * dx).mean(), (dy * dy).mean(), (dx * dy).mean()


def laplacian(band: np.ndarray) -> np.ndarray:
    return ndimage.correlate(band, LAPLACIAN_8, mode="nearest")


def scc(fused, ref, cfg: Optional[MetricConfig] = None) -> float:
    """Band-averaged correlation of Laplacian-filtered detail."""
    f, r = _arrays(fused, ref)
    cors = []
    for b in range(f.shape[2]):
        hf = laplacian(f[:, :, b]).ravel()
        hr = laplacian(r[:, :, b]).ravel()
        hf = hf - hf.mean()
        hr = hr - hr.mean()
        nf, nr = np.sqrt(hf @ hf), np.sqrt(hr @ hr)
        if nf == 0 or nr == 0:
            raise MetricError(f"band {b}: high-pass detail has zero variance")
        cors.append((hf @ hr) / (nf * nr))
    return float(np.clip(np.mean(cors), -1.0, 1.0))


def gaussian_taps(size: int, sigma: float) -> np.ndarray:
    """1-D factor of the normalized Gaussian SSIM window."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _separable_valid(img, taps):
    """Valid-mode correlation with the outer product ``taps x taps``."""
    k = taps.size
    rows = sliding_window_view(img, k, axis=0) @ taps
    return sliding_window_view(rows, k, axis=1) @ taps


def ssim(fused, ref, cfg: MetricConfig = MetricConfig()) -> float:
    """Gaussian-weighted SSIM averaged over valid windows and bands."""
    f, r = _arrays(fused, ref)
    k = cfg.ssim_window
    if min(f.shape[:2]) < k:
        raise MetricError(f"image {f.shape[:2]} smaller than SSIM window {k}")
    g = gaussian_taps(k, cfg.ssim_sigma)
    c1, c2 = cfg.ssim_c1, cfg.ssim_c2
    vals = []
    for b in range(f.shape[2]):
        x, y = r[:, :, b], f[:, :, b]
        mx, my = _separable_valid(x, g), _separable_valid(y, g)
        vx = _separable_valid(x * x, g) - mx * mx
        vy = _separable_valid(y * y, g) - my * my
        cxy = _separable_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append((num / den).mean())
    return float(np.mean(vals))


def evaluate(fused, ref, cfg: MetricConfig = MetricConfig()) -> MetricReport:
    """All five metrics for one (fused, reference) pair."""
    f, r = _arrays(fused, ref)
    sam_value, excluded = sam(f, r, cfg, return_excluded=True)
    return MetricReport(
        ergas=ergas(f, r, cfg),
        sam=sam_value,
        uiqi=uiqi(f, r, cfg),
        scc=scc(f, r),
        ssim=ssim(f, r, cfg),
        sam_excluded=excluded,
    )


def mean_report(reports) -> MetricReport:
    reports = list(reports)
    if not reports:
        raise MetricError("no reports to average")
    avg = {k: float(np.mean([getattr(rep, k) for rep in reports])) for k in METRIC_NAMES}
    return MetricReport(**avg, sam_excluded=sum(rep.sam_excluded for rep in reports))
