"""Run configuration: a flat, commented ``key = value`` text file.

Example::

    # data
    archive = runs/toy/samples
    patch = 64
    stride = 64

    # optimizer
    batch_size = 8
    steps = 2000      # stop after this many updates

    model = compact

Blank values mean "use the default". ``#`` starts a comment anywhere on a
line. Unknown keys are an error, as are repeated keys.
"""

from __future__ import annotations

import os
import typing
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

import torch

from .imaging import DegradeConfig
from .metrics import MetricConfig
from .net import COMPACT, FULL, TOY, Manifest
from .trainer import TrainConfig

PRESETS = {"full": FULL, "compact": COMPACT, "toy": TOY}
METHODS = ("ihs", "brovey", "hpf", "bicubic", "dats")
SPLITS = ("favorable", "typical")
DTYPES = {"float32": torch.float32, "float64": torch.float64}


class ConfigError(ValueError):
    """Malformed config file or inconsistent settings."""


@dataclass(frozen=True)
class RunConfig:
    # paths
    pan: Optional[str] = None
    ms: Optional[str] = None
    archive: Optional[str] = None
    test_archive: Optional[str] = None
    checkpoint: Optional[str] = None
    log: Optional[str] = None
    report: Optional[str] = None
    records: Optional[str] = None
    figure: Optional[str] = None

    # degradation and patching
    scale: int = 4
    blur_sigma: Optional[float] = None
    phase: int = 0
    patch: int = 128
    stride: Optional[int] = None
    reduced: bool = True

    # metrics
    resolution_ratio: Optional[float] = None
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    uiqi_window: int = 8
    uiqi_global: bool = False
    sam_unit: str = "radians"
    precision: int = 4

    # training
    batch_size: int = 32
    learning_rate: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 1
    steps: Optional[int] = None
    seed: int = 0
    checkpoint_every: int = 0
    clip_grad_norm: Optional[float] = None
    holdout: int = 0
    dtype: str = "float32"

    # model
    model: str = "full"
    enc_widths: Optional[Tuple[int, ...]] = None
    dec_widths: Optional[Tuple[int, ...]] = None
    cla_reduction: Optional[int] = None
    pla_hidden: Optional[int] = None
    fusion_units: Optional[int] = None

    # comparison
    methods: Tuple[str, ...] = ("ihs", "brovey", "hpf", "bicubic", "dats")
    split: str = "favorable"

    def __post_init__(self):
        if self.model not in PRESETS:
            raise ConfigError(f"model must be one of {sorted(PRESETS)}, got {self.model!r}")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.holdout < 0 or self.precision < 1:
            raise ConfigError("holdout must be >= 0 and precision >= 1")
        # construct the library configs now so bad values fail before any work
        try:
            self.degrade_config()
            self.metric_config()
            self.train_config()
            self.manifest()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- views onto library configs ---------------------------------------

    def degrade_config(self) -> DegradeConfig:
        return DegradeConfig(scale=self.scale, blur_sigma=self.blur_sigma, phase=self.phase)

    def metric_config(self) -> MetricConfig:
        ratio = 1.0 / self.scale if self.resolution_ratio is None else self.resolution_ratio
        return MetricConfig(
            resolution_ratio=ratio,
            ssim_window=self.ssim_window,
            ssim_sigma=self.ssim_sigma,
            uiqi_window=self.uiqi_window,
            uiqi_global=self.uiqi_global,
            sam_unit=self.sam_unit,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            epochs=self.epochs,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every,
            clip_grad_norm=self.clip_grad_norm,
        )

    def manifest(self) -> Manifest:
        over = {
            k: getattr(self, k)
            for k in ("enc_widths", "dec_widths", "cla_reduction", "pla_hidden", "fusion_units")
            if getattr(self, k) is not None
        }
        return replace(PRESETS[self.model], **over)

    @property
    def torch_dtype(self):
        return DTYPES[self.dtype]

    def with_overrides(self, **values) -> "RunConfig":
        """Copy with the non-None ``values`` applied (CLI flags win over the file)."""
        unknown = set(values) - _FIELDS.keys()
        if unknown:
            raise ConfigError(f"unknown setting(s): {sorted(unknown)}")
        return replace(self, **{k: v for k, v in values.items() if v is not None})

    # -- path checks --------------------------------------------------------

    def require(self, *keys: str) -> None:
        """Fail unless every named setting is present."""
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")

    def check_inputs(self, *keys: str) -> None:
        """Every named input path must be set and exist."""
        self.require(*keys)
        for k in keys:
            if not os.path.exists(getattr(self, k)):
                raise FileNotFoundError(f"{k}: {getattr(self, k)} does not exist")

    def check_outputs(self, *keys: str) -> None:
        """The parent directory of every named output path must exist."""
        for k in keys:
            path = getattr(self, k)
            if path is None:
                continue
            parent = os.path.dirname(os.path.abspath(path))
            if not os.path.isdir(parent):
                raise FileNotFoundError(f"{k}: directory {parent} does not exist")


_FIELDS = {f.name: f for f in fields(RunConfig)}
_HINTS = typing.get_type_hints(RunConfig)


def _convert(key: str, text: str):
    hint = _HINTS[key]
    args = typing.get_args(hint)
    if typing.get_origin(hint) is typing.Union:
        if text == "":
            return None
        hint = next(a for a in args if a is not type(None))
    if typing.get_origin(hint) is tuple:
        inner = typing.get_args(hint)[0]
        return tuple(inner(t.strip()) for t in text.split(",") if t.strip())
    if hint is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return hint(text)


def parse_value(key: str, text: str):
    """Convert the string ``text`` to the type of setting ``key``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown setting {key!r}")
    try:
        return _convert(key, text.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = parse_value(key, val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return values


def load_config(path=None, **overrides) -> RunConfig:
    """Read ``path`` (if given) and apply non-None ``overrides`` on top."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values = parse_config(fh.read(), str(path))
        # relative paths in a config file are relative to the file itself
        base = os.path.dirname(os.path.abspath(path))
        for k in _PATH_KEYS:
            if values.get(k) and not os.path.isabs(values[k]):
                values[k] = os.path.join(base, values[k])
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - _FIELDS.keys()
    if unknown:
        raise ConfigError(f"unknown setting(s): {sorted(unknown)}")
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    """Render ``cfg`` in the file format (round-trips through parse_config)."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            text = ""
        elif isinstance(v, tuple):
            text = ",".join(str(x) for x in v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}".rstrip())
    return "\n".join(lines) + "\n"


_PATH_KEYS = ("pan", "ms", "archive", "test_archive", "checkpoint", "log", "report", "records", "figure")
