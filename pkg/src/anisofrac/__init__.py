"""Discrete anisotropic fractional variable-exponent energies and their critical points."""

__version__ = "0.1.0"
