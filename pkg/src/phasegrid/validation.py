"""Input validation for the estimator facade."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError

__all__ = ["as_image_batch", "as_label_array", "as_cell_labels", "as_cell_mask"]


def _finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def as_image_batch(x, name: str = "X") -> tuple:
    """Coerce to a float32 (n, H, W, C) batch.

    Accepts (n, H, W) single-channel or (n, H, W, C). Returns
    (batch, (H, W), C).
    """
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise ShapeError(
            f"{name} must be (n, H, W) or (n, H, W, C), got shape {arr.shape}"
        )
    if arr.shape[0] == 0:
        raise ShapeError(f"{name} is empty")
    _finite(arr, name)
    return arr, arr.shape[1:3], arr.shape[3]


def as_label_array(y, n: int, name: str = "y") -> np.ndarray:
    """Coerce to a length-n vector of labels (any hashable dtype)."""
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ShapeError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    return arr


def as_cell_labels(y, n: int, cells: tuple, name: str = "y") -> np.ndarray:
    """Coerce to an (n, h, w) int64 grid of non-negative cell labels."""
    arr = np.asarray(y)
    want = (n,) + tuple(cells)
    if arr.shape != want:
        raise ShapeError(f"{name} must have shape {want}, got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise DomainError(f"{name} must hold integer cell labels")
    if arr.min() < 0:
        raise DomainError(f"{name} labels must be >= 0")
    return arr.astype(np.int64)


def as_cell_mask(mask, n: int, cells: tuple, name: str = "mask") -> np.ndarray:
    """Coerce to an (n, h, w) float mask with at least one active cell."""
    arr = np.asarray(mask, dtype=np.float64)
    want = (n,) + tuple(cells)
    if arr.shape != want:
        raise ShapeError(f"{name} must have shape {want}, got {arr.shape}")
    _finite(arr, name)
    if arr.sum() <= 0:
        raise DomainError(f"{name} selects no cells")
    return arr
