"""Raster-level inference with a DatsModel."""

from __future__ import annotations

import numpy as np
import torch

from ..imaging.raster import Raster
from .model import DatsModel


def to_tensor(r, dtype=torch.float32) -> torch.Tensor:
    """H x W x C Raster (or array) to a 1 x C x H x W tensor."""
    v = r.values if isinstance(r, Raster) else np.asarray(r)
    return torch.from_numpy(np.ascontiguousarray(v.transpose(2, 0, 1))).to(dtype)[None]


def batch_tensor(rasters, dtype=torch.float32) -> torch.Tensor:
    return torch.cat([to_tensor(r, dtype) for r in rasters], dim=0)


def forward(model: DatsModel, pan: Raster, lrms_up: Raster) -> Raster:
    """Pansharpen one co-registered pair; the output is clamped to [0, 1]."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        out = model(to_tensor(pan, dtype), to_tensor(lrms_up, dtype))
    values = out[0].permute(1, 2, 0).double().numpy()
    return lrms_up.with_values(np.clip(values, 0.0, 1.0))
