"""Finite-difference operators, cost lifting and the segmentation energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Image, Palette

# Squared norm bound of the forward-difference gradient in 2D.
GRAD_NORM_SQ = 8.0


@dataclass(frozen=True)
class EnergyBreakdown:
    tv_term: float
    smooth_term: float
    data_term: float

    @property
    def total(self) -> float:
        return self.tv_term + self.smooth_term + self.data_term

    def as_dict(self) -> dict:
        return {
            "tv_term": self.tv_term,
            "smooth_term": self.smooth_term,
            "data_term": self.data_term,
            "total": self.total,
        }


def gradient(z: np.ndarray) -> np.ndarray:
    """Forward differences of every label plane with Neumann boundary.

    Parameters
    ----------
    z : np.ndarray
        Array of shape ``(K, H, W)``.

    Returns
    -------
    np.ndarray
        Array of shape ``(K, H, W, 2)``; ``[..., 0]`` differences along
        columns (x), ``[..., 1]`` along rows (y). The last column (resp. row)
        is zero.
    """
    z = np.asarray(z, dtype=np.float64)
    g = np.zeros(z.shape + (2,))
    g[:, :, :-1, 0] = z[:, :, 1:] - z[:, :, :-1]
    g[:, :-1, :, 1] = z[:, 1:, :] - z[:, :-1, :]
    return g


def divergence(p: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of :func:`gradient`."""
    p = np.asarray(p, dtype=np.float64)
    px, py = p[..., 0], p[..., 1]
    d = np.zeros(p.shape[:-1])

    d[:, :, 0] = px[:, :, 0]
    d[:, :, 1:-1] = px[:, :, 1:-1] - px[:, :, :-2]
    d[:, :, -1] = -px[:, :, -2] if p.shape[2] > 1 else 0.0

    d[:, 0, :] += py[:, 0, :]
    d[:, 1:-1, :] += py[:, 1:-1, :] - py[:, :-2, :]
    if p.shape[1] > 1:
        d[:, -1, :] -= py[:, -2, :]
    else:
        d[:, 0, :] -= py[:, 0, :]
    return d


def cost_field(f: Image, palette: Palette) -> np.ndarray:
    """Lifted data cost ``w[k, i, j] = 0.5 * ||f[i, j] - c_k||^2``."""
    diff = f.data[None, :, :, :] - palette.colors[:, None, None, :]
    return 0.5 * np.einsum("khwc,khwc->khw", diff, diff)


def tv_norm(grad: np.ndarray) -> float:
    """Isotropic l1 norm: sum over labels and pixels of the (x, y) magnitude."""
    return float(np.sqrt(grad[..., 0] ** 2 + grad[..., 1] ** 2).sum())


def energy(z: np.ndarray, w: np.ndarray, lam: float, mu: float) -> EnergyBreakdown:
    """Evaluate ``lam*||grad z||_1 + mu/2*||grad z||_2^2 + <z, w>``."""
    if lam < 0 or mu < 0:
        raise ValueError("lambda and mu must be nonnegative")
    z = np.asarray(z, dtype=np.float64)
    g = gradient(z)
    return EnergyBreakdown(
        tv_term=float(lam) * tv_norm(g),
        smooth_term=0.5 * float(mu) * float(np.sum(g * g)),
        data_term=float(np.sum(z * w)),
    )


def estimate_gradient_norm_sq(shape: tuple[int, ...], n_iter: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ``||grad||^2`` on fields of ``shape``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(n_iter):
        x = -divergence(gradient(x))
        s = np.linalg.norm(x)
        if s == 0:
            return 0.0
        x /= s
    return float(s)
