"""Input validation helpers shared across the package.

Small checks that normalize user-facing inputs into the arrays the rest of
the code expects, raising ValueError with the offending shape spelled out.
"""

from __future__ import annotations

import numpy as np

__all__ = ["check_points", "check_pixel_coords", "check_image", "check_grid", "check_finite"]


def check_points(points, name: str = "points") -> np.ndarray:
    """Coerce to an (N, 3) float64 array; a single 3-vector becomes (1, 3)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape == (3,):
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must be (N, 3), got shape {arr.shape}")
    return arr


def check_pixel_coords(coords, name: str = "pixel_coords") -> np.ndarray:
    """Coerce to an (N, 2) float64 array of continuous pixel coordinates."""
    arr = np.asarray(coords, dtype=np.float64)
    if arr.ndim == 1 and arr.shape == (2,):
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must be (N, 2), got shape {arr.shape}")
    return arr


def check_image(pixels, name: str = "pixels") -> np.ndarray:
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must be (H, W, 3), got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_grid(values, ndim: int, name: str = "grid") -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dims, got shape {arr.shape}")
    return arr


def check_finite(arr, name: str = "array") -> np.ndarray:
    arr = np.asarray(arr)
    if not np.isfinite(arr).all():
        bad = int((~np.isfinite(arr)).sum())
        raise ValueError(f"{name} contains {bad} non-finite values")
    return arr
