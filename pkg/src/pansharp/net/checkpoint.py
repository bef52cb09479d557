"""Portable binary checkpoints.

Layout (all integers little-endian)::

    b"DATSCKPT"             8-byte magic
    u32 version             currently 1
    u32 n, n bytes          UTF-8 JSON header: {"architecture": {...}, "meta": {...}}
    u32 count               number of tensors
    count x tensor record:
        u16 n, n bytes      UTF-8 name
        u8 dtype            1 = float32, 2 = float64
        u8 ndim
        ndim x u32          shape
        values              row-major, little-endian

Model parameters are stored under their ``state_dict`` names. Extra tensors
(optimizer moments) use a ``prefix.`` namespace chosen by the caller.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from .model import DatsModel, Manifest

MAGIC = b"DATSCKPT"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


class CheckpointError(IOError):
    pass


def write_checkpoint(path, model: DatsModel, extra=None, meta=None) -> None:
    tensors = {k: v.detach() for k, v in model.state_dict().items()}
    for k, v in (extra or {}).items():
        if k in tensors:
            raise CheckpointError(f"extra tensor {k!r} shadows a model parameter")
        tensors[k] = v.detach()
    header = json.dumps(
        {"architecture": model.manifest.to_dict(), "meta": meta or {}}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            arr = t.cpu().numpy()
            code = _CODES.get(arr.dtype)
            if code is None:
                raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
            raw = name.encode()
            fh.write(struct.pack("<HBB", len(raw), code, arr.ndim))
            fh.write(raw)
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).astype(_DTYPES[code]).tobytes())


def read_checkpoint(path):
    """Return ``(manifest, tensors, meta)`` with tensors as torch tensors."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 8
    version, hlen = struct.unpack_from("<II", data, pos)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos += 8
    header = json.loads(data[pos : pos + hlen])
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    try:
        for _ in range(count):
            nlen, code, ndim = struct.unpack_from("<HBB", data, pos)
            pos += 4
            name = data[pos : pos + nlen].decode()
            pos += nlen
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            dt = _DTYPES[code]
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(data, dtype=dt, count=n, offset=pos).reshape(shape)
            pos += n * dt.itemsize
            tensors[name] = torch.from_numpy(arr.astype(dt.newbyteorder("=")))
    except (struct.error, KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt tensor table ({exc})") from exc
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return Manifest.from_dict(header["architecture"]), tensors, header.get("meta", {})


def load_model(path):
    """Rebuild a model from a checkpoint; returns ``(model, extra, meta)``."""
    manifest, tensors, meta = read_checkpoint(path)
    model = DatsModel(manifest)
    names = set(model.state_dict())
    state = {k: v for k, v in tensors.items() if k in names}
    missing = names - set(state)
    if missing:
        raise CheckpointError(f"{path}: missing parameters {sorted(missing)[:5]}")
    dtype = next(iter(state.values())).dtype
    model.to(dtype)
    model.load_state_dict(state)
    extra = {k: v for k, v in tensors.items() if k not in names}
    return model, extra, meta
