"""Raster file I/O.

Two formats are supported:

* ``.psrk`` -- the portable fixture format. Little-endian; the 4-byte magic
  ``PSRK`` followed by four u32 fields (height, width, channels, bit depth)
  and then ``height * width * channels`` u16 samples. With the default
  ``layout="bip"`` samples are pixel-interleaved (row-major H x W x C);
  ``layout="bsq"`` stores each band as a contiguous H x W plane.
* ``.tif``/``.tiff`` -- plain GeoTIFF read through :mod:`tifffile`. Either a
  single multi-sample page or one page per band is accepted. Geospatial
  tags are passed through untouched and otherwise ignored.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .raster import VALID_CHANNELS, Raster, RasterError, to_counts

MAGIC = b"PSRK"
_HEADER = struct.Struct("<4s4I")
LAYOUTS = ("bip", "bsq")


def _check_layout(layout):
    if layout not in LAYOUTS:
        raise RasterError(f"unknown band layout {layout!r}; expected one of {LAYOUTS}")


def _fmt(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".psrk":
        return "psrk"
    if ext in (".tif", ".tiff"):
        return "tiff"
    raise RasterError(f"unsupported raster extension {ext!r} ({path})")


def load_raster(path, layout: str = "bip", bit_depth: int | None = None) -> Raster:
    """Read a raster without normalizing it.

    ``bit_depth`` overrides the depth recorded in (or inferred from) the file,
    e.g. 12 for 12-bit data stored in 16-bit TIFF containers.
    """
    _check_layout(layout)
    if not os.path.isfile(path):
        raise RasterError(f"no such raster file: {path}")
    if _fmt(path) == "psrk":
        values, depth = _read_psrk(path, layout)
    else:
        values, depth = _read_tiff(path)
    if bit_depth is not None:
        depth = bit_depth
    return Raster(values.astype(np.float64), bit_depth=depth)


def save_raster(path, r: Raster, layout: str = "bip") -> None:
    """Write ``r`` as integer counts at its recorded bit depth."""
    _check_layout(layout)
    counts = to_counts(r)
    if _fmt(path) == "psrk":
        h, w, c = counts.shape
        body = counts if layout == "bip" else np.transpose(counts, (2, 0, 1))
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, h, w, c, r.bit_depth))
            fh.write(np.ascontiguousarray(body).astype("<u2").tobytes())
    else:
        import tifffile

        data = counts[:, :, 0] if r.channels == 1 else counts
        tifffile.imwrite(path, data, photometric="minisblack", planarconfig="contig")


def _read_psrk(path, layout):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise RasterError(f"{path}: truncated header")
        magic, h, w, c, depth = _HEADER.unpack(head)
        if magic != MAGIC:
            raise RasterError(f"{path}: bad magic {magic!r}")
        if c not in VALID_CHANNELS:
            raise RasterError(f"{path}: channel count {c} not in {VALID_CHANNELS}")
        payload = fh.read()
    n = h * w * c
    if len(payload) != 2 * n:
        raise RasterError(
            f"{path}: payload holds {len(payload) // 2} samples, header declares {h}x{w}x{c}"
        )
    flat = np.frombuffer(payload, dtype="<u2")
    if layout == "bip":
        return flat.reshape(h, w, c), depth
    return np.transpose(flat.reshape(c, h, w), (1, 2, 0)), depth


def _read_tiff(path):
    import tifffile

    with tifffile.TiffFile(path) as tif:
        pages = list(tif.pages)
        if not pages:
            raise RasterError(f"{path}: no image pages")
        arrays = [p.asarray() for p in pages]
        depth = int(pages[0].bitspersample)
        planar = pages[0].planarconfig
    if len(arrays) > 1:
        # one page per band
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1 or arrays[0].ndim != 2:
            raise RasterError(f"{path}: band dimension mismatch {sorted(shapes)}")
        values = np.stack(arrays, axis=-1)
    else:
        values = arrays[0]
        if values.ndim == 3 and planar == tifffile.PLANARCONFIG.SEPARATE:
            values = np.transpose(values, (1, 2, 0))
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3 or values.shape[2] not in VALID_CHANNELS:
        raise RasterError(f"{path}: unsupported sample layout {values.shape}")
    if not np.issubdtype(values.dtype, np.integer):
        raise RasterError(f"{path}: only integer samples are supported, got {values.dtype}")
    return values, min(depth, 16)
