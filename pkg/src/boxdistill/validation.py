"""Input validation helpers shared across the package."""

from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np
from sklearn.exceptions import NotFittedError


class ConfigurationError(ValueError):
    """Raised when a run is put together inconsistently."""


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_non_negative(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value >= 0.0):
        raise ValueError(f"{name} must be a non-negative finite number, got {value}")
    return value


def check_vector(name: str, x: Any, *, length: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float64 vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if length is not None and arr.size != length:
        raise ValueError(f"{name} must have length {length}, got {arr.size}")
    return arr


def check_matrix(name: str, x: Any, *, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 2-d float64 matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


def check_probabilities(name: str, p: Any, *, atol: float = 1e-6) -> np.ndarray:
    """Validate a 1-d probability vector (non-negative, sums to one)."""
    arr = check_vector(name, p)
    if np.any(arr < -atol):
        raise ValueError(f"{name} must be non-negative")
    total = float(arr.sum())
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1, got {total}")
    return arr


def check_fitted(estimator: Any, attribute: str = "params_") -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() before using it"
        )


def check_samples(samples: Sequence[Any]) -> list[Any]:
    """Validate a scene-sample sequence: non-empty, consistent feature size."""
    samples = list(samples)
    if not samples:
        raise ValueError("sample list is empty")
    width = samples[0].features.size
    for i, sample in enumerate(samples):
        if sample.features.ndim != 1 or sample.features.size != width:
            raise ValueError(
                f"sample {i} has feature shape {sample.features.shape}, expected ({width},)"
            )
        if not np.all(np.isfinite(sample.features)):
            raise ValueError(f"sample {i} has non-finite features")
    return samples
