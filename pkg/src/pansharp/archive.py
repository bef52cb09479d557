"""On-disk sample archive.

An archive is a directory holding one set of ``.psrk`` files per sample plus
``manifest.json``::

    manifest.json
    000000_lrms.psrk    LrMS, (h/s) x (w/s) x 4
    000000_pan.psrk     PAN, h x w x 1
    000000_lrms_up.psrk upsampled LrMS, h x w x 4
    000000_hrms.psrk    reference, h x w x 4 (reduced-resolution archives only)
    000001_...

Every raster is stored as integer counts at the bit depth recorded in its
header. The manifest is written with sorted keys and no timestamps so that
re-running ``prepare`` on the same inputs produces a byte-identical archive.
"""

from __future__ import annotations

import json
import os
from typing import List, Tuple

from .imaging import RasterError, Sample, load_raster, normalize, save_raster

MANIFEST = "manifest.json"
FORMAT = "pansharp-archive"
VERSION = 1
ROLES = ("lrms", "pan", "lrms_up", "hrms")


class ArchiveError(IOError):
    """Raised for missing, incomplete or inconsistent archives."""


def _names(i: int) -> dict:
    return {role: f"{i:06d}_{role}.psrk" for role in ROLES}


def write_archive(out_dir, samples: List[Sample], settings: dict) -> dict:
    """Write ``samples`` and return the manifest dictionary."""
    if not samples:
        raise ArchiveError("refusing to write an empty archive")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        names = _names(i)
        rasters = {"lrms": s.lrms, "pan": s.pan, "lrms_up": s.lrms_up, "hrms": s.hrms_ref}
        entry = {"id": i}
        for role, r in rasters.items():
            if r is None:
                continue
            save_raster(os.path.join(out_dir, names[role]), r)
            entry[role] = names[role]
        entries.append(entry)
    first = samples[0]
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "count": len(samples),
        "reduced": first.hrms_ref is not None,
        "pan_shape": list(first.pan.shape),
        "lrms_shape": list(first.lrms.shape),
        "bit_depth": first.pan.bit_depth,
        "settings": settings,
        "samples": entries,
    }
    with open(os.path.join(out_dir, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(archive_dir) -> dict:
    path = os.path.join(archive_dir, MANIFEST)
    if not os.path.isfile(path):
        raise ArchiveError(f"no sample archive at {archive_dir} ({MANIFEST} missing)")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path}: malformed manifest ({exc})") from exc
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise ArchiveError(f"{path}: not a version-{VERSION} {FORMAT} manifest")
    if manifest["count"] != len(manifest["samples"]):
        raise ArchiveError(f"{path}: count {manifest['count']} disagrees with {len(manifest['samples'])} entries")
    return manifest


def read_archive(archive_dir) -> Tuple[List[Sample], dict]:
    """Load every sample (normalized to [0, 1]) and the manifest."""
    manifest = read_manifest(archive_dir)
    samples = []
    for entry in manifest["samples"]:
        loaded = {}
        for role in ROLES:
            if role not in entry:
                continue
            try:
                loaded[role] = normalize(load_raster(os.path.join(archive_dir, entry[role])))
            except RasterError as exc:
                raise ArchiveError(str(exc)) from exc
        try:
            samples.append(Sample(loaded["lrms"], loaded["pan"], loaded["lrms_up"], loaded.get("hrms")))
        except KeyError as exc:
            raise ArchiveError(f"sample {entry['id']} lacks {exc}") from exc
    return samples, manifest

