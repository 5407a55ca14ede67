"""Hybrid discrete-continuous compilation of trapped-ion circuits."""

__version__ = "0.1.0"
