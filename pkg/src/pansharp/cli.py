"""Batch command-line front end.

Subcommands::

    pansharp prepare     cut a PAN/MS pair into a sample archive
    pansharp train       fit the network on an archive
    pansharp pansharpen  fuse one PAN/LrMS pair with a chosen method
    pansharp evaluate    score a fused raster against a reference
    pansharp compare     score several methods over an archive

Settings come from ``--config FILE`` (see :mod:`pansharp.config`) and are
overridden by command-line flags. Every command checks its inputs before it
writes anything.

Exit codes: 0 success, 2 usage or precondition error, 3 file I/O error,
4 numeric failure (non-finite loss, undefined metric).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from typing import List

import torch

from . import __version__, plotting
from .archive import ROLES, ArchiveError, read_archive, read_manifest, write_archive
from .baselines import pansharpen_classical
from .config import METHODS, SPLITS, ConfigError, RunConfig, load_config
from .imaging import (
    Raster,
    RasterError,
    extract_patches,
    false_color,
    load_raster,
    normalize,
    save_raster,
    upsample,
    write_png,
)
from .metrics import MetricError, evaluate, mean_report
from .net import DatsModel, forward, load_model
from .report import format_table, write_records
from .trainer import Batch, TrainingError, fit, l1_loss

log = logging.getLogger("pansharp")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

DISPLAY = {"ihs": "IHS", "brovey": "Brovey", "hpf": "HPF", "bicubic": "Bicubic", "dats": "DATS"}


class UsageError(ValueError):
    pass


def _read(path) -> Raster:
    """Load and normalize a raster; format problems count as I/O errors."""
    try:
        return normalize(load_raster(path))
    except RasterError as exc:
        raise OSError(str(exc)) from exc


def _write(path, r: Raster) -> None:
    try:
        save_raster(path, r)
    except RasterError as exc:
        raise UsageError(str(exc)) from exc


# -- prepare -------------------------------------------------------------------


def cmd_prepare(cfg: RunConfig, args) -> int:
    cfg.check_inputs("pan", "ms")
    cfg.require("archive")
    pan, ms = _read(cfg.pan), _read(cfg.ms)
    # extraction is done fully in memory, so a bad size ratio writes nothing
    samples = extract_patches(pan, ms, patch=cfg.patch, stride=cfg.stride, cfg=cfg.degrade_config(), reduced=cfg.reduced)
    if not samples:
        raise UsageError("no patches fit inside the image")
    settings = {
        "patch": cfg.patch,
        "stride": cfg.stride if cfg.stride is not None else cfg.patch // 2,
        "scale": cfg.scale,
        "blur_sigma": cfg.degrade_config().sigma,
        "phase": cfg.phase,
        "reduced": cfg.reduced,
        "source_pan": os.path.basename(cfg.pan),
        "source_ms": os.path.basename(cfg.ms),
    }
    _clear_archive(cfg.archive)
    manifest = write_archive(cfg.archive, samples, settings)
    print(f"wrote {manifest['count']} samples to {cfg.archive}")
    return EXIT_OK


def _clear_archive(path) -> None:
    """Remove files listed by an existing manifest so reruns leave no strays."""
    try:
        old = read_manifest(path)
    except ArchiveError:
        return
    for entry in old["samples"]:
        for role in ROLES:
            if role in entry and os.path.isfile(os.path.join(path, entry[role])):
                os.remove(os.path.join(path, entry[role]))


# -- train ----------------------------------------------------------------------


def cmd_train(cfg: RunConfig, args) -> int:
    cfg.require("archive", "checkpoint")
    cfg.check_outputs("checkpoint", "log", "figure")
    if args.resume and not os.path.isfile(cfg.checkpoint):
        raise FileNotFoundError(f"cannot resume: {cfg.checkpoint} does not exist")
    samples, _ = read_archive(cfg.archive)
    if any(s.hrms_ref is None for s in samples):
        raise UsageError("training needs a reduced-resolution archive (samples with a reference)")
    if cfg.holdout >= len(samples):
        raise UsageError(f"holdout {cfg.holdout} leaves no training samples out of {len(samples)}")
    held = samples[len(samples) - cfg.holdout :] if cfg.holdout else []
    train = samples[: len(samples) - cfg.holdout]

    tcfg = cfg.train_config()
    if cfg.steps is not None:
        per_epoch = math.ceil(len(train) / tcfg.batch_size)
        tcfg = dataclasses.replace(tcfg, epochs=math.ceil(cfg.steps / per_epoch))
    model = DatsModel(cfg.manifest(), seed=cfg.seed).to(cfg.torch_dtype)
    meta = {"archive": os.path.realpath(cfg.archive), "holdout": cfg.holdout}
    model, tlog = fit(
        model,
        train,
        tcfg,
        checkpoint_path=cfg.checkpoint,
        log_path=cfg.log,
        resume_from=cfg.checkpoint if args.resume else None,
        max_steps=cfg.steps,
        meta=meta,
    )
    if not len(tlog):
        print("nothing to do: checkpoint already at the requested step budget")
        return EXIT_OK
    summary = f"trained steps {tlog.steps[0]}-{tlog.steps[-1]}  final loss {tlog.losses[-1]:.6f}"
    if held:
        dtype = next(model.parameters()).dtype
        b = Batch.from_samples(held, dtype)
        with torch.no_grad():
            summary += f"  holdout L1 {float(l1_loss(model(b.pan, b.lrms_up), b.ref)):.6f}"
    print(summary)
    if cfg.figure:
        plotting.loss_curve(tlog.steps, tlog.losses, cfg.figure)
    return EXIT_OK


# -- pansharpen -----------------------------------------------------------------


def _dats(cfg: RunConfig):
    if cfg.checkpoint is None:
        raise UsageError("method 'dats' needs --checkpoint")
    if not os.path.isfile(cfg.checkpoint):
        raise FileNotFoundError(f"checkpoint {cfg.checkpoint} does not exist")
    return load_model(cfg.checkpoint)


def fuse_with(method: str, pan: Raster, lrms_up: Raster, model=None) -> Raster:
    if method == "dats":
        return forward(model, pan, lrms_up)
    return pansharpen_classical(method, pan, lrms_up)


def cmd_pansharpen(cfg: RunConfig, args) -> int:
    method = args.method
    if method != "dats" and args.checkpoint:
        raise UsageError(f"--checkpoint only applies to method 'dats', not {method!r}")
    cfg.check_inputs("pan")
    if not os.path.isfile(args.lrms):
        raise FileNotFoundError(f"lrms: {args.lrms} does not exist")
    for p in (args.out, args.preview):
        if p and not os.path.isdir(os.path.dirname(os.path.abspath(p))):
            raise FileNotFoundError(f"directory for {p} does not exist")
    model = _dats(cfg)[0] if method == "dats" else None
    pan, lrms = _read(cfg.pan), _read(args.lrms)
    if pan.channels != 1 or lrms.channels != 4:
        raise UsageError(f"expected a 1-band PAN and 4-band LrMS, got {pan.channels} and {lrms.channels}")
    if (pan.height, pan.width) != (lrms.height * cfg.scale, lrms.width * cfg.scale):
        raise UsageError(
            f"size mismatch: PAN {pan.height}x{pan.width} is not {cfg.scale}x LrMS {lrms.height}x{lrms.width}"
        )
    lrms_up = upsample(lrms, cfg.scale, cfg.phase)
    fused = fuse_with(method, pan, lrms_up, model)
    _write(args.out, fused)
    if args.preview:
        write_png(args.preview, false_color(fused))
    print(f"{method}: wrote {fused.height}x{fused.width}x{fused.channels} to {args.out}")
    return EXIT_OK


# -- evaluate / compare -----------------------------------------------------------


def _emit(cfg: RunConfig, rows, **extra) -> None:
    table = format_table(rows, precision=cfg.precision)
    sys.stdout.write(table)
    if cfg.report:
        with open(cfg.report, "w") as fh:
            fh.write(table)
    if cfg.records:
        write_records(cfg.records, rows, **extra)
    if cfg.figure:
        plotting.metric_bars(rows, cfg.figure)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    for p in (args.fused, args.ref):
        if not os.path.isfile(p):
            raise FileNotFoundError(f"{p} does not exist")
    cfg.check_outputs("report", "records", "figure")
    fused, ref = _read(args.fused), _read(args.ref)
    if fused.shape != ref.shape:
        raise UsageError(f"dimension mismatch: fused {fused.shape} vs reference {ref.shape}")
    rep = evaluate(fused, ref, cfg.metric_config())
    _emit(cfg, [(args.label, rep)], samples=1)
    return EXIT_OK


def compare_rows(samples, methods: List[str], cfg: RunConfig, model=None):
    """Mean MetricReport per method over ``samples``, in ``methods`` order."""
    mcfg = cfg.metric_config()
    rows = []
    for m in methods:
        reps = [evaluate(fuse_with(m, s.pan, s.lrms_up, model), s.hrms_ref, mcfg) for s in samples]
        rows.append((DISPLAY[m], mean_report(reps)))
    return rows


def cmd_compare(cfg: RunConfig, args) -> int:
    key = "archive" if cfg.split == "favorable" else "test_archive"
    cfg.require(key)
    cfg.check_outputs("report", "records", "figure")
    if args.panel and not os.path.isdir(os.path.dirname(os.path.abspath(args.panel))):
        raise FileNotFoundError(f"directory for {args.panel} does not exist")
    methods = list(cfg.methods)
    model = None
    if "dats" in methods:
        model, _, meta = _dats(cfg)
        trained_on = meta.get("archive")
        same = trained_on is not None and trained_on == os.path.realpath(getattr(cfg, key))
        if cfg.split == "typical" and same:
            raise UsageError("typical split needs a test archive from a different source than training")
    samples, manifest = read_archive(getattr(cfg, key))
    if not manifest["reduced"]:
        raise UsageError("comparison needs a reduced-resolution archive (samples with a reference)")
    rows = compare_rows(samples, methods, cfg, model)
    _emit(cfg, rows, samples=len(samples), split=cfg.split)
    if args.panel:
        s = samples[0]
        images = {"Reference": s.hrms_ref}
        images.update({DISPLAY[m]: fuse_with(m, s.pan, s.lrms_up, model) for m in methods})
        plotting.preview_panel(images, args.panel)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------


def _methods(text: str):
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [m for m in items if m not in METHODS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand's unset flag from clobbering the same flag
    # given before the subcommand name
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value settings file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for initialization and data order")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="pansharp", description=__doc__.split("\n")[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="cut a PAN/MS pair into a sample archive")
    p.add_argument("--pan")
    p.add_argument("--ms")
    p.add_argument("--out", dest="archive", help="archive directory")
    p.add_argument("--patch", type=int, help="window size in PAN pixels")
    p.add_argument("--stride", type=int, help="window step in PAN pixels")
    p.add_argument("--full-resolution", dest="reduced", action="store_false", default=None,
                   help="keep native resolution (no reference images)")

    p = sub.add_parser("train", parents=[common], help="train the network on an archive")
    p.add_argument("--archive")
    p.add_argument("--checkpoint")
    p.add_argument("--log", help="JSON-lines training log")
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--model", choices=("full", "compact", "toy"))
    p.add_argument("--holdout", type=int, help="samples kept out of training and scored at the end")
    p.add_argument("--figure", help="loss-curve PNG")
    p.add_argument("--resume", action="store_true", help="continue from --checkpoint")

    p = sub.add_parser("pansharpen", parents=[common], help="fuse one PAN/LrMS pair")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--checkpoint")
    p.add_argument("--pan")
    p.add_argument("--lrms", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview", help="false-colour PNG (bands 3, 2, 1)")

    p = sub.add_parser("evaluate", parents=[common], help="score a fused raster against a reference")
    p.add_argument("--fused", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--label", default="Fused")
    p.add_argument("--report", help="write the table here as well")
    p.add_argument("--records", help="JSON-lines output")
    p.add_argument("--figure", help="metric bar chart PNG")

    p = sub.add_parser("compare", parents=[common], help="score several methods over an archive")
    p.add_argument("--methods", type=_methods, help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--archive")
    p.add_argument("--test-archive")
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--checkpoint")
    p.add_argument("--report")
    p.add_argument("--records")
    p.add_argument("--figure", help="metric bar chart PNG")
    p.add_argument("--panel", help="false-colour preview panel of the first sample")
    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "pansharpen": cmd_pansharpen,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}

# flags that map onto RunConfig settings of the same name
_OVERRIDES = (
    "seed", "pan", "ms", "archive", "test_archive", "checkpoint", "log", "report", "records", "figure",
    "patch", "stride", "reduced", "steps", "epochs", "batch_size", "learning_rate", "model", "holdout",
    "methods", "split",
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = getattr(args, "config", None)
        if config and not os.path.isfile(config):
            raise FileNotFoundError(f"config file {config} does not exist")
        overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
        cfg = load_config(config, **overrides)
        return COMMANDS[args.command](cfg, args)
    except (MetricError, TrainingError, FloatingPointError) as exc:
        print(f"pansharp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ArchiveError) as exc:
        print(f"pansharp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"pansharp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
