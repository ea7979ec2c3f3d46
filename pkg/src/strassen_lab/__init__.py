"""Strassen attention: kernels, hand-set constructions, split-VC search, data and training."""

__version__ = "0.1.0"
