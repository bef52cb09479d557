"""False-colour previews (bands 3, 2, 1 as R, G, B)."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .raster import Raster, RasterError

PREVIEW_BANDS = (3, 2, 1)


def stretch(band: np.ndarray) -> np.ndarray:
    """Min-max stretch to [0, 1]; a flat band maps to 0.5."""
    lo, hi = band.min(), band.max()
    if hi == lo:
        return np.full_like(band, 0.5, dtype=np.float64)
    return (band - lo) / (hi - lo)


def false_color(r: Raster) -> Raster:
    """Three-band preview with each band stretched independently."""
    if r.channels < 3:
        raise RasterError(f"false colour needs >= 3 bands, got {r.channels}")
    rgb = np.stack([stretch(r.values[:, :, b - 1]) for b in PREVIEW_BANDS], axis=-1)
    return Raster(rgb, bit_depth=r.bit_depth, normalized=True)


def write_png(path, preview: Raster) -> None:
    """Write a 3-band [0, 1] raster as an 8-bit RGB PNG."""
    data = np.clip(np.rint(preview.values * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")
