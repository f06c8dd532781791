"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations


import numpy as np
from sklearn.utils.validation import check_array


class DataError(ValueError):
    """Raised when input series are malformed (shape, finiteness, variance)."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when a feature matrix does not have full column rank."""


def as_block(values, name: str, *, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``values`` to a finite 2-D float array (1-D input becomes one column)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if allow_empty and arr.ndim == 2 and arr.shape[1] == 0:
        return arr
    try:
        return check_array(arr, ensure_all_finite=True, input_name=name, ensure_min_samples=1)
    except ValueError as exc:  # sklearn's message already names the input
        raise DataError(f"{name}: {exc}") from exc


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, (bool, np.bool_)) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha
