"""Spectral Morse theory laboratory for planar domains with boundary."""

__version__ = "0.1.0"
