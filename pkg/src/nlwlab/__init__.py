"""Numerical laboratory for the randomized defocusing nonlinear wave equation on a periodic box."""

__version__ = "0.1.0"
