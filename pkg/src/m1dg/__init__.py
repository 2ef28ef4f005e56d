"""Realizability-preserving RKDG solver for the 2D M1 radiative transfer model."""

__version__ = "0.1.0"
