"""Entropy-stable spectral-element shallow water solver on cubed-sphere grids."""

__version__ = "0.1.0"
