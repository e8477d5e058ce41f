"""Dispersive system/cavity stochastic master equations and their displaced-frame reduction."""

__version__ = "0.1.0"
