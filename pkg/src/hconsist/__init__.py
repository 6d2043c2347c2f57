"""Numerical toolkit for H-consistency bounds of surrogate losses."""
__version__ = "0.1.0"
