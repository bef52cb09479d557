"""Dual attention two-stream pansharpening network.

Data flow for a PAN image of size H x W and an upsampled MS image on the
same grid::

    PAN -> encoder (H, H/2, H/4) -> pixel attention ----------------+
                                                                    concat -> residual fusion -> decoder -> + lrms_up
    MS  -> encoder (H, H/2, H/4) -> channel attention -> pixel attn-+

The decoder upsamples twice with transposed convolutions and after each
step concatenates the encoder activations of both streams at that
resolution. Tensors are NCHW throughout.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Tuple

import torch
from torch import nn
from torch.nn import functional as F


class ShapeError(ValueError):
    """Raised when an input does not meet a block's shape contract."""


@dataclass(frozen=True)
class Manifest:
    """Architecture hyperparameters; stored with every checkpoint."""

    pan_bands: int = 1
    ms_bands: int = 4
    enc_widths: Tuple[int, int, int] = (32, 64, 128)
    cla_reduction: int = 8
    pla_hidden: int = 16
    fusion_units: int = 3
    dec_widths: Tuple[int, int] = (128, 64)
    final_init_std: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "enc_widths", tuple(int(w) for w in self.enc_widths))
        object.__setattr__(self, "dec_widths", tuple(int(w) for w in self.dec_widths))
        if len(self.enc_widths) != 3 or len(self.dec_widths) != 2:
            raise ValueError("expected three encoder widths and two decoder widths")
        if self.enc_widths[-1] // self.cla_reduction < 1:
            raise ValueError("channel attention bottleneck would be empty")

    @property
    def fused_width(self) -> int:
        return 2 * self.enc_widths[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
        return cls(**d)


FULL = Manifest()
# CPU-friendly widths for smoke training and the ordering experiment
COMPACT = Manifest(enc_widths=(16, 32, 64), cla_reduction=4, pla_hidden=8, dec_widths=(64, 32))
# tiny widths for gradient checks and shape sweeps
TOY = Manifest(enc_widths=(4, 6, 8), cla_reduction=4, pla_hidden=3, fusion_units=2, dec_widths=(6, 4))


def conv3(cin, cout, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1)


class Encoder(nn.Module):
    """Three conv stages; the last two halve the resolution."""

    def __init__(self, cin, widths):
        super().__init__()
        w1, w2, w3 = widths
        self.stages = nn.ModuleList([conv3(cin, w1), conv3(w1, w2, 2), conv3(w2, w3, 2)])

    def forward(self, x):
        acts = []
        for conv in self.stages:
            x = F.relu(conv(x))
            acts.append(x)
        return acts


class ChannelAttention(nn.Module):
    """Global mean pooling followed by a 1x1 conv gate C -> C/r -> C."""

    def __init__(self, channels, reduction):
        super().__init__()
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.excite = nn.Conv2d(channels // reduction, channels, 1)

    def pooled(self, f):
        return f.mean(dim=(2, 3), keepdim=True)

    def weights(self, f):
        return torch.sigmoid(self.excite(F.relu(self.squeeze(self.pooled(f)))))

    def forward(self, f):
        return f * self.weights(f)


class PixelAttention(nn.Module):
    """Per-pixel scalar gate (1x1 convs C -> hidden -> 1) broadcast over channels."""

    def __init__(self, channels, hidden):
        super().__init__()
        self.squeeze = nn.Conv2d(channels, hidden, 1)
        self.excite = nn.Conv2d(hidden, 1, 1)

    def weights(self, f):
        return torch.sigmoid(self.excite(F.relu(self.squeeze(f))))

    def forward(self, f):
        return f * self.weights(f)


class ResidualUnit(nn.Module):
    """``relu(r + conv(relu(conv(r))))``."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = conv3(channels, channels)
        self.conv2 = conv3(channels, channels)

    def branch(self, r):
        return self.conv2(F.relu(self.conv1(r)))

    def forward(self, r):
        return F.relu(r + self.branch(r))


class Decoder(nn.Module):
    def __init__(self, m: Manifest):
        super().__init__()
        w1, w2, _ = m.enc_widths
        d1, d2 = m.dec_widths
        self.up1 = nn.ConvTranspose2d(m.fused_width, d1, 4, stride=2, padding=1)
        self.merge1 = conv3(d1 + 2 * w2, d1)
        self.up2 = nn.ConvTranspose2d(d1, d2, 4, stride=2, padding=1)
        self.merge2 = conv3(d2 + 2 * w1, d2)
        self.final = conv3(d2, m.ms_bands)

    def forward(self, f, skips_half, skips_full, use_skips=True):
        x = F.relu(self.up1(f))
        if use_skips:
            x = torch.cat([x, *skips_half], dim=1)
        else:
            x = torch.cat([x, *(torch.zeros_like(s) for s in skips_half)], dim=1)
        x = F.relu(self.merge1(x))
        x = F.relu(self.up2(x))
        if use_skips:
            x = torch.cat([x, *skips_full], dim=1)
        else:
            x = torch.cat([x, *(torch.zeros_like(s) for s in skips_full)], dim=1)
        x = F.relu(self.merge2(x))
        return self.final(x)


class DatsModel(nn.Module):
    """Full network; ``forward(pan, lrms_up)`` returns the unclamped estimate."""

    def __init__(self, manifest: Manifest = FULL, seed: int = 0):
        super().__init__()
        m = self.manifest = manifest
        top = m.enc_widths[-1]
        self.pan_encoder = Encoder(m.pan_bands, m.enc_widths)
        self.ms_encoder = Encoder(m.ms_bands, m.enc_widths)
        self.cla = ChannelAttention(top, m.cla_reduction)
        self.pla_pan = PixelAttention(top, m.pla_hidden)
        self.pla_ms = PixelAttention(top, m.pla_hidden)
        self.fusion = nn.Sequential(*(ResidualUnit(m.fused_width) for _ in range(m.fusion_units)))
        self.decoder = Decoder(m)
        self.reset_parameters(seed)
        self._check_shapes()

    def reset_parameters(self, seed: int = 0):
        """Kaiming fan-in init, zero biases, near-zero final layer."""
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for mod in self.modules():
                if not isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
                    continue
                w = mod.weight
                if mod is self.decoder.final:
                    w.normal_(0.0, self.manifest.final_init_std, generator=g)
                else:
                    k = w.shape[2] * w.shape[3]
                    if isinstance(mod, nn.ConvTranspose2d):
                        fan_in = w.shape[0] * k / (mod.stride[0] * mod.stride[1])
                    else:
                        fan_in = w.shape[1] * k
                    w.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
                mod.bias.zero_()

    def _check_shapes(self):
        m = self.manifest
        if self.cla.excite.out_channels != m.enc_widths[-1]:
            raise ShapeError("channel attention width mismatch")
        if self.decoder.final.out_channels != m.ms_bands:
            raise ShapeError("decoder output bands mismatch")

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def encode(self, pan, lrms_up):
        _check_inputs(pan, lrms_up, self.manifest)
        return self.pan_encoder(pan), self.ms_encoder(lrms_up)

    def forward(self, pan, lrms_up, use_skips=True, use_pla_ms=True):
        p_acts, m_acts = self.encode(pan, lrms_up)
        pan_att = self.pla_pan(p_acts[-1])
        ms_att = self.cla(m_acts[-1])
        if use_pla_ms:
            ms_att = self.pla_ms(ms_att)
        fused = fuse(ms_att, pan_att)
        code = self.fusion(fused)
        detail = self.decoder(code, (p_acts[1], m_acts[1]), (p_acts[0], m_acts[0]), use_skips)
        return detail + lrms_up


def fuse(ms_att, pan_att):
    """Channel concatenation, MS block first."""
    if ms_att.shape[0] != pan_att.shape[0] or ms_att.shape[2:] != pan_att.shape[2:]:
        raise ShapeError(f"cannot fuse {tuple(ms_att.shape)} with {tuple(pan_att.shape)}")
    return torch.cat([ms_att, pan_att], dim=1)


def _check_inputs(pan, lrms_up, m: Manifest):
    if pan.dim() != 4 or lrms_up.dim() != 4:
        raise ShapeError("inputs must be NCHW tensors")
    if pan.shape[1] != m.pan_bands or lrms_up.shape[1] != m.ms_bands:
        raise ShapeError(
            f"expected {m.pan_bands} PAN and {m.ms_bands} MS bands, "
            f"got {pan.shape[1]} and {lrms_up.shape[1]}"
        )
    if pan.shape[0] != lrms_up.shape[0] or pan.shape[2:] != lrms_up.shape[2:]:
        raise ShapeError(f"PAN {tuple(pan.shape)} and MS {tuple(lrms_up.shape)} are not co-registered")
    h, w = pan.shape[2:]
    if h % 4 or w % 4:
        raise ShapeError(f"spatial size {h}x{w} must be divisible by 4")


# Functional entry points mirroring the block structure.


def encode_pan(pan, model: DatsModel):
    """Per-stage PAN activations at H, H/2 and H/4."""
    _check_divisible(pan)
    return model.pan_encoder(pan)


def encode_ms(lrms_up, model: DatsModel):
    """Per-stage MS activations at H, H/2 and H/4."""
    _check_divisible(lrms_up)
    return model.ms_encoder(lrms_up)


def channel_attention(f, model: DatsModel):
    return model.cla(f)


def pixel_attention(f, model: DatsModel, which: str = "pan"):
    if which not in ("pan", "ms"):
        raise ValueError(f"which must be 'pan' or 'ms', got {which!r}")
    return (model.pla_pan if which == "pan" else model.pla_ms)(f)


def fusion_network(f, model: DatsModel):
    if f.shape[1] != model.manifest.fused_width:
        raise ShapeError(f"fusion network expects {model.manifest.fused_width} channels, got {f.shape[1]}")
    return model.fusion(f)


def reconstruct(f, pan_acts, ms_acts, lrms_up, model: DatsModel, use_skips=True):
    """Decode the fused code back to the PAN grid and add ``lrms_up``."""
    half, full = (pan_acts[1], ms_acts[1]), (pan_acts[0], ms_acts[0])
    if f.shape[2] * 2 != half[0].shape[2] or f.shape[2] * 4 != full[0].shape[2]:
        raise ShapeError(f"skip resolutions {half[0].shape[2:]}, {full[0].shape[2:]} do not match code {f.shape[2:]}")
    return model.decoder(f, half, full, use_skips) + lrms_up


def _check_divisible(x):
    if x.dim() != 4:
        raise ShapeError("expected an NCHW tensor")
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise ShapeError(f"spatial size {tuple(x.shape[2:])} must be divisible by 4")
