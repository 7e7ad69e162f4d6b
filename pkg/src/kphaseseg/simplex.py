"""Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np
from numba import njit

from .core import check_assignment


@njit(cache=True)
def _project_columns(y, out):
    # Project each column of the (K, N) array y onto the simplex, writing into out.
    k, n = y.shape
    u = np.empty(k)
    for col in range(n):
        for i in range(k):
            u[i] = y[i, col]
        # Insertion sort, descending; K is small.
        for i in range(1, k):
            key = u[i]
            j = i - 1
            while j >= 0 and u[j] < key:
                u[j + 1] = u[j]
                j -= 1
            u[j + 1] = key
        css = 0.0
        theta = 0.0
        for j in range(k):
            css += u[j]
            t = (css - 1.0) / (j + 1)
            if u[j] > t:
                theta = t
            else:
                break
        total = 0.0
        for i in range(k):
            x = y[i, col] - theta
            if x < 0.0:
                x = 0.0
            out[i, col] = x
            total += x
        for i in range(k):
            out[i, col] /= total
    return out


def project_simplex(y) -> np.ndarray:
    """Project a K-vector onto ``{x : x >= 0, sum(x) = 1}``.

    With ``u`` sorted in decreasing order, take the largest ``j`` such that
    ``u_j > (sum_{i<=j} u_i - 1) / j``, subtract that threshold and clip at
    zero. The result is divided by its sum to absorb rounding.

    >>> project_simplex([1.2, 0.3, -0.1]).round(12).tolist()
    [0.95, 0.05, 0.0]
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("expected a nonempty 1-D vector")
    if np.isnan(y).any():
        raise ValueError("cannot project a vector containing NaN")
    if not np.isfinite(y).all():
        raise ValueError("cannot project a vector with infinite entries")
    col = np.ascontiguousarray(y[:, None])
    return _project_columns(col, np.empty_like(col))[:, 0]


def project_field(z0: np.ndarray, *, validate: bool = True) -> np.ndarray:
    """Project every pixel's K-vector of a ``(K, H, W)`` array onto the simplex."""
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim != 3:
        raise ValueError(f"expected shape (K, H, W), got {z0.shape}")
    if not np.isfinite(z0).all():
        raise ValueError("cannot project a field with non-finite entries")
    flat = np.ascontiguousarray(z0.reshape(z0.shape[0], -1))
    z = _project_columns(flat, np.empty_like(flat)).reshape(z0.shape)
    return check_assignment(z) if validate else z
