"""Basis-aware threshold sampling and softmax-bottleneck experiments."""

__version__ = "0.1.0"
