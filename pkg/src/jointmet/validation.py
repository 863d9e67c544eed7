"""Input validation helpers used by the estimators and pipeline functions."""

from __future__ import annotations

import numpy as np


def check_array_1d(x, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float array and reject non-finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_array_2d(x, name: str = "X") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_finite_scalar(x, name: str = "value") -> float:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x}")
    return x


def check_positive(x, name: str = "value") -> float:
    x = check_finite_scalar(x, name)
    if x <= 0:
        raise ValueError(f"{name} must be positive, got {x}")
    return x


def check_probability(p, name: str = "probability") -> float:
    p = check_finite_scalar(p, name)
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {p}")
    return p


def check_same_length(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise ValueError(
            f"{name_a} and {name_b} must have equal length ({len(a)} != {len(b)})"
        )


def check_strictly_increasing(t: np.ndarray, name: str = "timestamps") -> None:
    if t.size >= 2 and not np.all(np.diff(t) > 0):
        raise ValueError(f"{name} must be strictly increasing")
