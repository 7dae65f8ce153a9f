"""Input checks shared by the estimator wrappers, built on sklearn's validators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted


def check_features(X, n_features: int | None = None) -> np.ndarray:
    """2-D finite float64 array, optionally with a required column count."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} columns, got {X.shape[1]}")
    return X


def check_points(X, min_cols: int = 3) -> np.ndarray:
    """(N, >=3) coordinates; empty clouds are allowed."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=0)
    if X.shape[1] < min_cols:
        raise ValueError(f"points need at least {min_cols} columns, got {X.shape[1]}")
    return X


def check_labels(y, n_rows: int, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_rows:
        raise ValueError(f"labels must be a vector of length {n_rows}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class ids")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y


def check_fitted(estimator, attribute: str) -> None:
    check_is_fitted(estimator, attribute)
