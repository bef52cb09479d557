"""Sliding-window Sample extraction from a co-registered PAN/MS pair."""

from __future__ import annotations

from typing import List, Optional

from .raster import Raster, RasterError, Sample
from .resample import DegradeConfig, degrade, upsample


def window_count(size: int, patch: int, stride: int) -> int:
    """Number of windows along one axis."""
    if patch > size:
        return 0
    return (size - patch) // stride + 1


def make_sample(pan: Raster, ms: Raster, cfg: DegradeConfig, reduced: bool = True) -> Sample:
    """Build one Sample from a PAN patch and its co-located MS patch.

    In reduced-resolution mode (Wald protocol) the MS patch becomes the
    reference and both inputs are degraded by ``cfg``. In full-resolution
    mode the inputs are used as-is and no reference exists.
    """
    if reduced:
        lrms = degrade(ms, cfg)
        pan_in = degrade(pan, cfg)
        ref = ms
    else:
        lrms, pan_in, ref = ms, pan, None
    lrms_up = upsample(lrms, cfg.scale, cfg.phase)
    return Sample(lrms=lrms, pan=pan_in, lrms_up=lrms_up, hrms_ref=ref)


def extract_patches(
    pan: Raster,
    ms: Raster,
    patch: int = 128,
    stride: Optional[int] = None,
    cfg: DegradeConfig = DegradeConfig(),
    reduced: bool = True,
) -> List[Sample]:
    """Cut ``pan``/``ms`` into Samples with a sliding window.

    ``patch`` and ``stride`` are measured in PAN pixels; the MS window is
    ``patch / scale`` pixels wide. Windows are emitted in row-major order.
    ``stride`` defaults to ``patch // 2``.
    """
    s = cfg.scale
    stride = patch // 2 if stride is None else stride
    if pan.channels != 1:
        raise RasterError(f"PAN must be single-band, got {pan.channels} channels")
    if (pan.height, pan.width) != (ms.height * s, ms.width * s):
        raise RasterError(
            f"PAN {pan.height}x{pan.width} is not {s}x the MS size {ms.height}x{ms.width}"
        )
    if patch % s or stride % s or stride < 1:
        raise RasterError(f"patch {patch} and stride {stride} must be positive multiples of {s}")
    if reduced and (patch // s) % s:
        raise RasterError(f"reduced-resolution patches need patch divisible by {s * s}")
    if patch > pan.height or patch > pan.width:
        raise RasterError(f"patch {patch} larger than image {pan.height}x{pan.width}")

    m = patch // s
    out = []
    for y in range(0, pan.height - patch + 1, stride):
        for x in range(0, pan.width - patch + 1, stride):
            p = pan.with_values(pan.values[y : y + patch, x : x + patch])
            q = ms.with_values(ms.values[y // s : y // s + m, x // s : x // s + m])
            out.append(make_sample(p, q, cfg, reduced))
    return out
