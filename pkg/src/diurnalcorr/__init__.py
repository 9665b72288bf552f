"""Diurnal variation in high-frequency spot correlation: estimation and tests."""

__version__ = "0.1.0"
