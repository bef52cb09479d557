"""L1 training loop with a hand-written Adam optimizer, checkpoints and logs."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from .imaging.raster import Raster, Sample
from .net.checkpoint import CheckpointError, load_model, write_checkpoint
from .net.infer import batch_tensor
from .net.model import DatsModel

log = logging.getLogger(__name__)

ADAM_PREFIX = "adam."


class TrainingError(RuntimeError):
    """Raised when the loss or a gradient becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    clip_grad_norm: Optional[float] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0 <= b < 1:
                raise ValueError(f"Adam betas must lie in [0, 1), got {b}")
        if self.epochs < 0 or self.checkpoint_every < 0:
            raise ValueError("epochs and checkpoint_every must be non-negative")


@dataclass
class TrainLog:
    steps: List[int] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    update_norms: List[float] = field(default_factory=list)
    wall_ms: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    @property
    def wall_time(self) -> float:
        return self.wall_ms[-1] / 1000.0 if self.wall_ms else 0.0

    def records(self):
        for i in range(len(self)):
            yield {
                "step": self.steps[i],
                "loss": self.losses[i],
                "lr": self.lrs[i],
                "update_norm": self.update_norms[i],
                "wall_ms": self.wall_ms[i],
            }

    def write_jsonl(self, path, append: bool = False) -> None:
        with open(path, "a" if append else "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


def l1_loss(pred, target):
    """Mean absolute error over every element (and every batch item).

    Accepts tensors (returns a differentiable scalar tensor) or Rasters /
    arrays (returns a float).
    """
    if isinstance(pred, Raster):
        pred = pred.values
    if isinstance(target, Raster):
        target = target.values
    if tuple(pred.shape) != tuple(target.shape):
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if isinstance(pred, torch.Tensor):
        return (pred - target).abs().mean()
    return float(np.abs(np.asarray(pred) - np.asarray(target)).mean())


class Adam:
    """Adam with bias-corrected moments over a model's named parameters."""

    def __init__(self, named_params, lr=1e-4, betas=(0.5, 0.999), eps=1e-8):
        self.params = dict(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: torch.zeros_like(p) for k, p in self.params.items()}

    @torch.no_grad()
    def step(self) -> float:
        """Apply one update from the current ``.grad`` fields; returns the update norm."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        sq = 0.0
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else torch.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            denom = (v.sqrt() / math.sqrt(bc2)).add_(self.eps)
            update = (m / denom).mul_(self.lr / bc1)
            p.sub_(update)
            sq += float((update * update).sum())
        return math.sqrt(sq)

    def state_tensors(self) -> dict:
        out = {}
        for k in self.params:
            out[f"{ADAM_PREFIX}m.{k}"] = self.m[k]
            out[f"{ADAM_PREFIX}v.{k}"] = self.v[k]
        return out

    def load_state_tensors(self, tensors: dict, t: int) -> None:
        for k in self.params:
            try:
                self.m[k].copy_(tensors[f"{ADAM_PREFIX}m.{k}"])
                self.v[k].copy_(tensors[f"{ADAM_PREFIX}v.{k}"])
            except KeyError as exc:
                raise CheckpointError(f"optimizer state missing {exc}") from exc
        self.t = t


def make_optimizer(model: DatsModel, cfg: TrainConfig) -> Adam:
    return Adam(
        model.named_parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )


@dataclass
class Batch:
    pan: torch.Tensor
    lrms_up: torch.Tensor
    ref: torch.Tensor

    def __len__(self):
        return self.pan.shape[0]

    def subset(self, idx) -> "Batch":
        idx = torch.as_tensor(np.asarray(idx), dtype=torch.long)
        return Batch(self.pan[idx], self.lrms_up[idx], self.ref[idx])

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], dtype=torch.float32) -> "Batch":
        if not samples:
            raise ValueError("empty sample set")
        if any(s.hrms_ref is None for s in samples):
            raise ValueError("training samples need a reference (reduced-resolution) image")
        shapes = {(s.pan.shape, s.lrms_up.shape) for s in samples}
        if len(shapes) != 1:
            raise ValueError(f"non-uniform sample shapes: {sorted(shapes)}")
        return cls(
            batch_tensor([s.pan for s in samples], dtype),
            batch_tensor([s.lrms_up for s in samples], dtype),
            batch_tensor([s.hrms_ref for s in samples], dtype),
        )


def _check_finite(model, loss):
    if not torch.isfinite(loss):
        raise TrainingError(f"non-finite loss {float(loss.detach())}")
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise TrainingError(f"non-finite gradient in {name}")


def train_step(model: DatsModel, batch: Batch, cfg: TrainConfig, opt: Adam):
    """One Adam step on the batch-mean L1 loss.

    Returns ``(loss, update_norm)`` where ``loss`` is measured before the
    update.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    model.zero_grad(set_to_none=True)
    loss = l1_loss(model(batch.pan, batch.lrms_up), batch.ref)
    loss.backward()
    _check_finite(model, loss)
    if cfg.clip_grad_norm is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_grad_norm)
    norm = opt.step()
    return float(loss.detach()), norm


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffled sample order for one epoch (Philox keyed by seed and epoch)."""
    rng = np.random.Generator(np.random.Philox(key=[seed, epoch]))
    return rng.permutation(n)


@dataclass
class Progress:
    step: int = 0
    epoch: int = 0
    batch_index: int = 0


def save_training_checkpoint(path, model, opt, cfg, progress: Progress, extra_meta=None) -> None:
    meta = dict(extra_meta or {})
    meta.update({"progress": asdict(progress), "adam_t": opt.t, "train_config": asdict(cfg)})
    write_checkpoint(path, model, extra=opt.state_tensors(), meta=meta)


def load_training_checkpoint(path, cfg: TrainConfig):
    """Return ``(model, optimizer, progress)`` restored from ``path``."""
    model, extra, meta = load_model(path)
    if "progress" not in meta:
        raise CheckpointError(f"{path} holds no training state")
    opt = make_optimizer(model, cfg)
    opt.load_state_tensors(extra, int(meta["adam_t"]))
    return model, opt, Progress(**meta["progress"])


def fit(
    model: DatsModel,
    dataset,
    cfg: TrainConfig,
    checkpoint_path=None,
    log_path=None,
    resume_from=None,
    max_steps: Optional[int] = None,
    meta: Optional[dict] = None,
):
    """Train ``model`` on ``dataset`` (Samples or a :class:`Batch`).

    With ``resume_from`` the model, optimizer moments and position in the
    data stream are restored from a checkpoint written by an earlier call
    with the same seed, and step numbering continues. ``max_steps`` stops
    early after that many global steps. ``meta`` is stored verbatim in every
    checkpoint written. Returns ``(model, TrainLog)``.
    """
    dtype = next(model.parameters()).dtype
    data = dataset if isinstance(dataset, Batch) else Batch.from_samples(list(dataset), dtype)
    n = len(data)
    per_epoch = math.ceil(n / cfg.batch_size)

    if resume_from is not None:
        model, opt, progress = load_training_checkpoint(resume_from, cfg)
        data = Batch(*(t.to(next(model.parameters()).dtype) for t in (data.pan, data.lrms_up, data.ref)))
    else:
        opt = make_optimizer(model, cfg)
        progress = Progress()

    tlog = TrainLog()
    start = time.perf_counter()
    if log_path is not None and resume_from is None:
        open(log_path, "w").close()
    stop = False
    while progress.epoch < cfg.epochs and not stop:
        order = epoch_order(cfg.seed, progress.epoch, n)
        while progress.batch_index < per_epoch:
            b = progress.batch_index
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            loss, norm = train_step(model, data.subset(idx), cfg, opt)
            progress.step += 1
            progress.batch_index += 1
            tlog.steps.append(progress.step)
            tlog.losses.append(loss)
            tlog.lrs.append(cfg.learning_rate)
            tlog.update_norms.append(norm)
            tlog.wall_ms.append((time.perf_counter() - start) * 1000.0)
            if progress.step % 100 == 0:
                log.info("step %d loss %.6f", progress.step, loss)
            if checkpoint_path and cfg.checkpoint_every and progress.step % cfg.checkpoint_every == 0:
                save_training_checkpoint(checkpoint_path, model, opt, cfg, progress, meta)
            if max_steps is not None and progress.step >= max_steps:
                stop = True
                break
        else:
            progress.epoch += 1
            progress.batch_index = 0

    if checkpoint_path:
        save_training_checkpoint(checkpoint_path, model, opt, cfg, progress, meta)
    if log_path is not None:
        tlog.write_jsonl(log_path, append=True)
    return model, tlog
