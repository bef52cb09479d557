"""Raster model, I/O, Wald degradation, resampling, patches and previews."""

from .io import load_raster, save_raster
from .patches import extract_patches, make_sample, window_count
from .preview import false_color, write_png
from .raster import Raster, RasterError, Sample, normalize
from .resample import DegradeConfig, degrade, upsample
from .synthetic import synthetic_pair

__all__ = [
    "DegradeConfig",
    "Raster",
    "RasterError",
    "Sample",
    "degrade",
    "extract_patches",
    "false_color",
    "load_raster",
    "make_sample",
    "normalize",
    "save_raster",
    "synthetic_pair",
    "upsample",
    "window_count",
    "write_png",
]
