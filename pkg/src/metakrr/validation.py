"""Input validation helpers shared by the estimators and functional API."""

from __future__ import annotations

import numpy as np


def check_matrix(X, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Coerce to a finite 2-d float array with at least `min_rows` rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    if X.shape[1] < 1:
        raise ValueError(f"{name} needs at least one column")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def check_vector(y, name: str = "y", length: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-d float array, optionally of fixed length."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if length is not None and y.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite entries")
    return y


def check_same_columns(X, Z, name_x: str = "X", name_z: str = "Z") -> None:
    if X.shape[1] != Z.shape[1]:
        raise ValueError(
            f"column dimension mismatch: {name_x} has {X.shape[1]}, "
            f"{name_z} has {Z.shape[1]}"
        )


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value
