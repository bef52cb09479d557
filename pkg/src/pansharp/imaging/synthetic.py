"""Seeded synthetic PAN/MS scenes for tests, demos and the acceptance run.

The scene is drawn at PAN resolution as four correlated bands: smooth
"terrain" fields, axis-aligned "buildings" with their own spectra, and thin
"roads". PAN is the band mean, MS is the Wald degradation of the four bands,
so the pair is co-registered by construction.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .raster import Raster
from .resample import DegradeConfig, degrade


def _smooth_noise(rng, shape, sigma):
    """Periodic Gaussian-filtered white noise scaled to [-1, 1]."""
    spec = ndimage.fourier_gaussian(np.fft.fft2(rng.standard_normal(shape)), sigma)
    field = np.fft.ifft2(spec).real
    return field / (np.abs(field).max() + 1e-12)


def synthetic_bands(size: int, seed: int = 0, n_blocks: int | None = None) -> np.ndarray:
    """Return a ``size x size x 4`` float array in [0.025, 0.525]."""
    rng = np.random.default_rng(seed)
    terrain = _smooth_noise(rng, (size, size), size / 16)
    tint = np.stack([_smooth_noise(rng, (size, size), size / 8) for _ in range(4)], axis=-1)

    base = np.array([0.30, 0.35, 0.32, 0.45])
    bands = base + 0.15 * terrain[:, :, None] * np.array([0.8, 1.0, 0.9, 1.3]) + 0.05 * tint

    n_blocks = n_blocks if n_blocks is not None else max(4, (size // 16) ** 2 // 2)
    for _ in range(n_blocks):
        h, w = rng.integers(size // 64 + 2, size // 8 + 3, size=2)
        y, x = rng.integers(0, size - h), rng.integers(0, size - w)
        spectrum = rng.uniform(0.1, 0.8) * rng.uniform(0.7, 1.3, size=4)
        bands[y : y + h, x : x + w] = spectrum
    for _ in range(max(1, size // 64)):
        width = int(rng.integers(1, 4))
        pos = int(rng.integers(0, size - width))
        road = np.array([0.2, 0.21, 0.22, 0.18])
        if rng.random() < 0.5:
            bands[pos : pos + width, :] = road
        else:
            bands[:, pos : pos + width] = road
    bands += 0.01 * rng.standard_normal(bands.shape)
    # compress into the range a 12-bit product typically occupies (~0.05-0.55)
    return 0.025 + 0.5 * np.clip(bands, 0.0, 1.0)


def synthetic_pair(size: int = 512, seed: int = 0, cfg: DegradeConfig = DegradeConfig()):
    """Return ``(pan, ms)`` normalized Rasters, PAN ``size`` pixels square."""
    bands = synthetic_bands(size, seed)
    truth = Raster(bands, bit_depth=12, normalized=True)
    pan = Raster(bands.mean(axis=2, keepdims=True), bit_depth=12, normalized=True)
    return pan, degrade(truth, cfg)
