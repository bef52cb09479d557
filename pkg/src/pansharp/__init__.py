"""Two-stream attention pansharpening: network, training, metrics and baselines."""

__version__ = "0.1.0"
