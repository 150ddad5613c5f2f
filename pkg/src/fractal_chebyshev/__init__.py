"""Fractal Chebyshev learning-rate schedules for gradient descent."""

__version__ = "0.1.0"
