"""Gradient-free training of k-bit quantized networks with EDA and cooperative coevolution."""

__version__ = "0.1.0"
