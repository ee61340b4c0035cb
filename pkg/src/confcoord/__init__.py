"""Numerical workbench for conformal harmonic and conformal wave coordinates."""

__version__ = "0.1.0"
