"""Input checks shared by the estimators.

Missing cells are represented by NaN throughout the array API; the
:class:`~micluster.mechanisms.Dataset` container carries an explicit mask.
"""
from __future__ import annotations

import numpy as np

from .exceptions import InvalidParameterError

CONSTRAINTS = ("homo", "hetero")


def check_constraint(constraint: str) -> str:
    if constraint not in CONSTRAINTS:
        raise InvalidParameterError(f"constraint must be one of {CONSTRAINTS}, got {constraint!r}")
    return constraint


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.ndim != 2:
        raise InvalidParameterError(f"expected a 2-D array, got shape {X.shape}")
    return X


def check_complete(X) -> np.ndarray:
    """2-D float array without NaN or inf."""
    X = _as_matrix(X)
    if not np.all(np.isfinite(X)):
        raise InvalidParameterError("data contains missing or non-finite values")
    return X


def check_incomplete(X, mask=None):
    """Return ``(values, mask)`` with ``mask`` True on observed cells.

    ``X`` may be a :class:`Dataset` (mask taken from it), or an array where
    NaN marks missing cells.  Missing cells of the returned values are NaN.
    """
    if mask is None and hasattr(X, "mask") and hasattr(X, "values"):
        mask = X.mask
        X = X.values
    X = np.array(_as_matrix(X), dtype=float)
    if mask is None:
        mask = ~np.isnan(X)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != X.shape:
            raise InvalidParameterError("mask and values have different shapes")
        mask = mask & ~np.isnan(X)
    if np.any(np.isinf(X[mask])):
        raise InvalidParameterError("observed cells must be finite")
    X[~mask] = np.nan
    return X, mask


def check_rows_observed(mask: np.ndarray) -> None:
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        raise InvalidParameterError(f"rows {empty[:5].tolist()} have no observed cell")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise InvalidParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
