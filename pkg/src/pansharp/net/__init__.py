"""The dual attention two-stream network and its checkpoint format."""

from .checkpoint import CheckpointError, load_model, read_checkpoint, write_checkpoint
from .infer import batch_tensor, forward, to_tensor
from .model import (
    COMPACT,
    FULL,
    TOY,
    DatsModel,
    Manifest,
    ShapeError,
    channel_attention,
    encode_ms,
    encode_pan,
    fuse,
    fusion_network,
    pixel_attention,
    reconstruct,
)

__all__ = [
    "COMPACT",
    "FULL",
    "TOY",
    "CheckpointError",
    "DatsModel",
    "Manifest",
    "ShapeError",
    "batch_tensor",
    "channel_attention",
    "encode_ms",
    "encode_pan",
    "forward",
    "fuse",
    "fusion_network",
    "load_model",
    "pixel_attention",
    "read_checkpoint",
    "reconstruct",
    "to_tensor",
    "write_checkpoint",
]
