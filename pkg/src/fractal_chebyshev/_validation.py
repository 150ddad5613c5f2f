"""Exception types and small argument checks shared across modules."""

import numbers

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an argument is outside the documented domain."""


class UnsupportedHorizonError(ValueError):
    """Raised when a horizon is not a power of two."""


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix fails the symmetric positive-definite check."""


class DimensionMismatchError(ValueError):
    pass


def is_power_of_two(n) -> bool:
    return isinstance(n, numbers.Integral) and n >= 1 and (n & (n - 1)) == 0


def check_power_of_two(T):
    if not is_power_of_two(T):
        raise UnsupportedHorizonError(f"T must be a power of 2, got {T}")
    return int(T)


def check_spectrum_bounds(m, M):
    if not (np.isfinite(m) and np.isfinite(M)):
        raise InvalidArgumentError("m and M must be finite")
    if m <= 0:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    if M < m:
        raise InvalidArgumentError(f"M must be >= m, got m={m}, M={M}")


def check_horizon(T):
    if not isinstance(T, numbers.Integral) or T < 1:
        raise InvalidArgumentError(f"T must be a positive integer, got {T}")
    return int(T)


def as_vector(x, dim=None, name="x", dtype=np.float64):
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise DimensionMismatchError(f"{name} must be one-dimensional, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise DimensionMismatchError(f"{name} has length {x.shape[0]}, expected {dim}")
    return x
