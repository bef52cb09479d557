"""Raster and Sample containers plus radiometric normalization."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

VALID_CHANNELS = (1, 3, 4)


class RasterError(ValueError):
    """Raised for malformed rasters or violated shape preconditions."""


@dataclass(frozen=True)
class Raster:
    """An H x W x C image.

    ``values`` is always a float64 array of shape (height, width, channels).
    Before :func:`normalize` it holds raw sensor counts; afterwards it holds
    reflectance-like values in [0, 1] and ``normalized`` is True.
    """

    values: np.ndarray
    bit_depth: int = 16
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise RasterError(f"expected a 3-D array, got shape {v.shape}")
        h, w, c = v.shape
        if h < 1 or w < 1:
            raise RasterError(f"empty raster {v.shape}")
        if c not in VALID_CHANNELS:
            raise RasterError(f"channel count {c} not in {VALID_CHANNELS}")
        if not 1 <= self.bit_depth <= 16:
            raise RasterError(f"bit depth {self.bit_depth} outside 1..16")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def full_scale(self) -> float:
        """Largest representable value in the current units."""
        return 1.0 if self.normalized else float(2 ** self.bit_depth - 1)

    def with_values(self, values: np.ndarray) -> "Raster":
        return replace(self, values=values)


def normalize(r: Raster) -> Raster:
    """Scale raw counts by ``2**bit_depth - 1`` and clamp to [0, 1].

    Already-normalized rasters are returned unchanged.
    """
    if r.normalized:
        return r
    scaled = r.values / float(2 ** r.bit_depth - 1)
    return Raster(np.clip(scaled, 0.0, 1.0), bit_depth=r.bit_depth, normalized=True)


def to_counts(r: Raster) -> np.ndarray:
    """Integer sensor counts for writing a raster back to disk."""
    top = 2 ** r.bit_depth - 1
    v = r.values * top if r.normalized else r.values
    return np.clip(np.rint(v), 0, top).astype(np.uint16)


@dataclass(frozen=True)
class Sample:
    """One training/evaluation tuple: LrMS, PAN, upsampled LrMS and reference.

    ``hrms_ref`` is None for full-resolution samples, which have no ground
    truth.
    """

    lrms: Raster
    pan: Raster
    lrms_up: Raster
    hrms_ref: Optional[Raster] = None

    def __post_init__(self):
        hw = self.pan.shape[:2]
        if self.pan.channels != 1:
            raise RasterError(f"PAN must be single-band, got {self.pan.channels}")
        if self.lrms_up.shape[:2] != hw:
            raise RasterError(f"lrms_up {self.lrms_up.shape} does not match PAN {hw}")
        if self.hrms_ref is not None and self.hrms_ref.shape != self.lrms_up.shape:
            raise RasterError(f"reference {self.hrms_ref.shape} does not match {self.lrms_up.shape}")
        lh, lw = self.lrms.shape[:2]
        if hw[0] % lh or hw[1] % lw or hw[0] // lh != hw[1] // lw:
            raise RasterError(f"LrMS {self.lrms.shape} is not an integer fraction of PAN {hw}")

    @property
    def scale(self) -> int:
        return self.pan.height // self.lrms.height
