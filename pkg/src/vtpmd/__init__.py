"""Importance-score pruning and matrix-decomposition compression of vision-transformer
linear layers, with the decompositions implemented from scratch."""

__version__ = "0.1.0"
