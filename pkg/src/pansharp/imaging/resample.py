"""Wald-style degradation (blur + decimate) and bicubic upsampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .raster import Raster, RasterError


@dataclass(frozen=True)
class DegradeConfig:
    """Reduced-resolution simulation settings.

    ``blur_sigma`` defaults to ``scale / 2`` and the kernel is truncated at
    four standard deviations. ``phase`` is the decimation offset: output pixel
    ``k`` is taken from blurred pixel ``phase + k * scale``.
    """

    scale: int = 4
    blur_sigma: Optional[float] = None
    phase: int = 0

    def __post_init__(self):
        if self.scale < 2:
            raise ValueError(f"scale must be >= 2, got {self.scale}")
        if self.blur_sigma is not None and self.blur_sigma <= 0:
            raise ValueError(f"blur sigma must be > 0, got {self.blur_sigma}")
        if not 0 <= self.phase < self.scale:
            raise ValueError(f"phase must lie in [0, {self.scale}), got {self.phase}")

    @property
    def sigma(self) -> float:
        return self.scale / 2.0 if self.blur_sigma is None else float(self.blur_sigma)


def gaussian_taps(sigma: float, truncate: float = 4.0) -> np.ndarray:
    """Normalized 1-D Gaussian kernel of radius ``ceil(truncate * sigma)``."""
    radius = int(math.ceil(truncate * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of an H x W x C array with symmetric borders."""
    taps = gaussian_taps(sigma)
    out = ndimage.correlate1d(values, taps, axis=0, mode="reflect")
    return ndimage.correlate1d(out, taps, axis=1, mode="reflect")


def degrade(r: Raster, cfg: DegradeConfig = DegradeConfig()) -> Raster:
    """Blur then decimate ``r`` by ``cfg.scale``."""
    s = cfg.scale
    if r.height % s or r.width % s:
        raise RasterError(f"raster {r.height}x{r.width} is not divisible by scale {s}")
    blurred = blur(r.values, cfg.sigma)
    return r.with_values(blurred[cfg.phase :: s, cfg.phase :: s])


def keys_weight(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel (Catmull-Rom for ``a = -0.5``)."""
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


def bicubic_matrix(n_in: int, scale: int, phase: int = 0, a: float = -0.5) -> np.ndarray:
    """Dense (n_in * scale) x n_in interpolation operator for one axis.

    Output sample ``i`` sits at input coordinate ``(i - phase) / scale``, the
    inverse of the decimation geometry used by :func:`degrade`. Out-of-range
    taps are clamped to the edge sample.
    """
    n_out = n_in * scale
    pos = (np.arange(n_out, dtype=np.float64) - phase) / scale
    base = np.floor(pos).astype(int)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for off in (-1, 0, 1, 2):
        idx = base + off
        w = keys_weight(pos - idx, a)
        np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1)), w)
    return mat


def upsample(r: Raster, scale: int = 4, phase: int = 0) -> Raster:
    """Bicubic (Catmull-Rom) upsampling by an integer factor, per channel.

    Results are clamped to the raster's valid range ([0, 1] once normalized).
    """
    if scale < 2:
        raise ValueError(f"scale must be >= 2, got {scale}")
    ay = bicubic_matrix(r.height, scale, phase)
    ax = bicubic_matrix(r.width, scale, phase)
    out = np.einsum("ih,hwc,jw->ijc", ay, r.values, ax, optimize=True)
    return r.with_values(np.clip(out, 0.0, r.full_scale))
