"""Annealed Langevin sampling along a Gaussian-style interpolation, with explicit bias bounds."""

__version__ = "0.1.0"
