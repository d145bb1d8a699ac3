"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_feature_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    return check_finite(x, name)


def as_label_vector(y, class_count: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce to a 1-D int64 label vector, optionally bounded by class_count."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ValueError(f"{name} must hold integer class indices")
        y = rounded
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError(f"{name} contains negative class indices")
    if class_count is not None and y.size and y.max() >= class_count:
        raise ValueError(
            f"{name} contains index {int(y.max())} >= class_count {class_count}"
        )
    return y


def check_simplex(p, name: str = "p", atol: float = 1e-6) -> np.ndarray:
    """Validate a probability vector (or row-wise matrix of them)."""
    p = np.asarray(p, dtype=np.float64)
    check_finite(p, name)
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > atol):
        raise ValueError(f"{name} rows must sum to 1 (atol={atol})")
    return p


def check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


def as_rng(seed) -> np.random.Generator:
    """Accept a seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
