"""Input validation helpers shared by all estimators and functions."""

import numpy as np

__all__ = [
    "as_positions",
    "as_vector3",
    "as_scores",
    "as_binary_classes",
    "check_same_length",
]


def as_positions(x, name: str = "positions") -> np.ndarray:
    """Coerce ``x`` to a finite (N, 3) float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1 and a.size == 3:
        a = a.reshape(1, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return a


def as_vector3(x, name: str = "vector") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.size != 3:
        raise ValueError(f"{name} must be a 3-vector, got size {a.size}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return a


def as_scores(x, name: str = "scores", lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Coerce to a 1-D float64 array with entries in [lo, hi]."""
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    if a.size and (a.min() < lo or a.max() > hi):
        raise ValueError(f"{name} must lie in [{lo}, {hi}]")
    return a


def as_binary_classes(x, name: str = "classes") -> np.ndarray:
    """Coerce to a 1-D int array with values in {0, 1}."""
    a = np.asarray(x)
    if a.dtype.kind == "f" and not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    a = a.astype(np.int64).reshape(-1)
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 (stable) and 1 (dynamic)")
    return a


def check_same_length(a, b, name_a: str = "a", name_b: str = "b") -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {name_a} has {len(a)}, {name_b} has {len(b)}")
