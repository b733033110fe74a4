"""Exceptions and input-validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


class PolygonalError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PolygonalError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(PolygonalError, ArithmeticError):
    """A numerical procedure failed (bracketing, convergence, quadrature)."""


def check_unit_interval(x, name="x"):
    """Return ``x`` as a float array, raising if any entry is outside [0, 1]."""
    arr = np.asarray(x, dtype=float)
    if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
        bad = arr[(arr < 0.0) | (arr > 1.0) | np.isnan(arr)].ravel()[0]
        raise DomainError(f"{name} must lie in [0, 1]; got {bad!r}")
    return arr


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer; got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}; got {value}")
    return int(value)


def check_positive(value, name):
    value = float(value)
    if not value > 0.0:
        raise DomainError(f"{name} must be > 0; got {value!r}")
    return value


def check_sample_array(x, name="X"):
    """Coerce a 1-d array or an (n, 1) column to a 1-d float array in [0, 1]."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DomainError(f"{name} must be 1-d or a single column; got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise DomainError(f"{name} contains non-finite values")
    return check_unit_interval(arr, name)


def as_output(arr, scalar):
    """Return a Python float when the caller passed a scalar."""
    return float(np.asarray(arr).reshape(-1)[0]) if scalar else arr
