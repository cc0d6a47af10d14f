"""Input validation helpers shared across the package.

These mirror the sklearn ``check_array`` idiom: coerce to a canonical
dtype/shape, fail loudly with a named argument on contract violations.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError

N_PART_CLASSES = 5  # foreground classes; 0 is background
MAX_LABEL_CODE = N_PART_CLASSES


def as_points(x, name: str = "points") -> np.ndarray:
    """Coerce to an (N, 3) float64 array of 3D points."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ContractError(f"{name} must have shape (N, 3), got {arr.shape}")
    return arr


def as_image(x, name: str = "image") -> np.ndarray:
    """Coerce to an (H, W, 3) float64 image."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    return arr


def as_label_map(x, name: str = "labels") -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ContractError(f"{name} must have shape (H, W), got {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > MAX_LABEL_CODE):
        raise ContractError(
            f"{name} codes must lie in 0..{MAX_LABEL_CODE}, "
            f"got range [{arr.min()}, {arr.max()}]"
        )
    return arr.astype(np.uint8, copy=False)


def check_same_shape(a, b, name_a: str = "a", name_b: str = "b") -> None:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(
            f"{name_a} and {name_b} must have the same shape: "
            f"{a.shape} vs {b.shape}"
        )


def check_finite(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x)
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def check_unit_interval(x, name: str = "value") -> None:
    arr = np.asarray(x)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ContractError(
            f"{name} must lie in [0, 1], got range [{arr.min()}, {arr.max()}]"
        )


def check_t(t: float) -> float:
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ContractError(f"noise level t must lie in (0, 1), got {t}")
    return t
