"""Numerical laboratory for weighted function spaces, exponential laws and
weighted mapping groups of matrix Lie groups."""

__version__ = "0.1.0"
