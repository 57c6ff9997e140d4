"""Signatures, control distances and Monte Carlo densities for ODEs driven by fractional Brownian motion."""

__version__ = "0.1.0"
