"""Input validation helpers used throughout the package.

All numeric data is coerced to C-contiguous float64; every public
operation works on dense 64-bit matrices.
"""

from __future__ import annotations

import numpy as np

from .exceptions import IndexOutOfRangeError, ShapeMismatchError


def as_float_matrix(x, name: str = "x", *, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array and verify every entry is finite."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ShapeMismatchError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def as_readonly(arr: np.ndarray) -> np.ndarray:
    """Return a C-contiguous float64 copy with the writeable flag cleared."""
    out = np.array(arr, dtype=np.float64, order="C", copy=True)
    out.flags.writeable = False
    return out


def check_index_list(indices, bound: int, name: str = "indices") -> np.ndarray:
    """Validate a 1-D integer index list against ``[0, bound)``."""
    idx = np.asarray(indices)
    if idx.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {idx.shape}")
    if idx.size and not np.issubdtype(idx.dtype, np.integer):
        if np.issubdtype(idx.dtype, np.floating) and np.all(idx == idx.astype(np.int64)):
            idx = idx.astype(np.int64)
        else:
            raise TypeError(f"{name} must be integers")
    idx = idx.astype(np.int64, copy=False)
    if idx.size and (idx.min() < 0 or idx.max() >= bound):
        bad = int(idx[(idx < 0) | (idx >= bound)][0])
        raise IndexOutOfRangeError(f"{name} contains {bad}, valid range is [0, {bound})")
    return idx


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "matrices") -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what} differ in shape: {a.shape} vs {b.shape}")
