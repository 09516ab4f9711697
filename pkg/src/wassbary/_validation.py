"""Shared input validation helpers.

All solvers funnel user-facing arrays through these functions so that shape
and sign errors surface with a consistent message instead of a numpy
broadcasting traceback.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_vector",
    "as_points",
    "as_weights",
    "as_cost_entries",
    "check_simplex",
]


def as_vector(x, name: str) -> np.ndarray:
    """Coerce ``x`` to a finite, non-empty 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_points(X, name: str = "points") -> np.ndarray:
    """Coerce ``X`` to a (d, n) array of point columns.

    A 1-D array is treated as n points on the real line.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a (d, n) array, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def as_weights(w, name: str = "weights", *, positive: bool = False) -> np.ndarray:
    """Coerce ``w`` to a 1-D nonnegative (optionally strictly positive) array."""
    arr = as_vector(w, name)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    if positive and np.any(arr == 0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def check_simplex(w: np.ndarray, name: str = "weights", *, tol: float = 1e-8) -> None:
    """Require that ``w`` sums to one within ``tol``."""
    total = float(w.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} must sum to 1 within {tol:g}, got {total:.12g}")


def as_cost_entries(M, name: str = "cost matrix") -> np.ndarray:
    """Unwrap a cost-matrix object or array into validated (n, m) entries."""
    entries = getattr(M, "entries", M)
    arr = np.asarray(entries, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    return arr
