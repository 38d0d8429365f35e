"""Finite-volume simulator for a degenerate two-population cross-diffusion system."""

__version__ = "0.1.0"
