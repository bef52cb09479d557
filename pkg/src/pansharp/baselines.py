"""Classical pansharpening baselines used as sanity anchors.

All methods take a single-band PAN and a 4-band MS already upsampled to the
PAN grid, and return a fused raster clamped to [0, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging.raster import Raster, RasterError

BROVEY_EPS = 1e-6


class Method(str, enum.Enum):
    IHS = "ihs"
    BROVEY = "brovey"
    HPF = "hpf"
    BICUBIC = "bicubic"


@dataclass(frozen=True)
class BaselineMethod:
    kind: Method
    hpf_kernel: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", Method(self.kind))
        if self.hpf_kernel < 3 or self.hpf_kernel % 2 == 0:
            raise ValueError(f"HPF kernel must be odd and >= 3, got {self.hpf_kernel}")


def intensity(ms: np.ndarray) -> np.ndarray:
    return ms.mean(axis=2)


def match_moments(src: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Shift and scale ``src`` to the mean and std of ``target``."""
    s_std = src.std()
    if s_std == 0:
        return np.full_like(src, target.mean())
    return (src - src.mean()) * (target.std() / s_std) + target.mean()


def ihs(pan: np.ndarray, ms: np.ndarray) -> np.ndarray:
    """Generalized IHS: inject the PAN-minus-intensity difference in every band."""
    i = intensity(ms)
    p = match_moments(pan, i)
    return ms + (p - i)[:, :, None]


def brovey(pan: np.ndarray, ms: np.ndarray) -> np.ndarray:
    ratio = pan / (intensity(ms) + BROVEY_EPS)
    return ms * ratio[:, :, None]


def hpf(pan: np.ndarray, ms: np.ndarray, size: int = 5) -> np.ndarray:
    detail = pan - ndimage.uniform_filter(pan, size=size, mode="reflect")
    return ms + detail[:, :, None]


def pansharpen_classical(method, pan: Raster, lrms_up: Raster) -> Raster:
    """Fuse ``pan`` and ``lrms_up`` with a classical method.

    ``method`` is a :class:`BaselineMethod` or a method name.
    """
    if not isinstance(method, BaselineMethod):
        method = BaselineMethod(Method(method))
    if pan.shape[:2] != lrms_up.shape[:2]:
        raise RasterError(f"PAN {pan.shape[:2]} and MS {lrms_up.shape[:2]} differ in size")
    if pan.channels != 1:
        raise RasterError(f"PAN must be single-band, got {pan.channels}")
    if lrms_up.channels != 4:
        raise RasterError(f"MS must have 4 bands, got {lrms_up.channels}")

    p, ms = pan.values[:, :, 0], lrms_up.values
    if method.kind is Method.BICUBIC:
        return lrms_up
    if method.kind is Method.IHS:
        out = ihs(p, ms)
    elif method.kind is Method.BROVEY:
        out = brovey(p, ms)
    else:
        out = hpf(p, ms, method.hpf_kernel)
    return lrms_up.with_values(np.clip(out, 0.0, lrms_up.full_scale))
