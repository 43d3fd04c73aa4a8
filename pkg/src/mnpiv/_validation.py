"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d


def as_unit_interval(values, name: str = "x") -> np.ndarray:
    """Return ``values`` as a float 1-d array, raising if any entry is outside [0, 1]."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        arr = column_or_1d(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(
            f"{name} must lie in [0, 1]; got range [{arr.min():.6g}, {arr.max():.6g}]. "
            "Rescale the data first."
        )
    return arr


def as_1d_column(X, name: str = "X") -> np.ndarray:
    """Accept a vector or a single-column matrix and return a 1-d float array."""
    arr = np.asarray(X)
    if arr.ndim == 2:
        arr = check_array(arr, ensure_2d=True, dtype=float)
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must have exactly one column, got {arr.shape[1]}")
        return arr[:, 0]
    return column_or_1d(check_array(arr, ensure_2d=False, dtype=float))


def check_same_length(**arrays) -> int:
    lengths = {k: len(v) for k, v in arrays.items()}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"inconsistent lengths: {lengths}")
    return next(iter(lengths.values()))


def check_positive(value, name: str, *, allow_zero: bool = False) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_probability(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)
