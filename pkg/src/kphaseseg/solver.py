"""Primal-dual (Chambolle-Pock) solver for the relaxed lifted segmentation model.

The problem solved is::

    min_z  lam*||grad z||_1 + mu/2*||grad z||_2^2 + <z, w>   s.t. z[:, n] in simplex

split with ``v = grad z`` and a dual variable ``q`` on the constraint
``v - grad z = 0``. Each iteration updates ``q``, then ``v`` (isotropic
shrinkage), then ``z`` (gradient step plus simplex projection), then the
over-relaxed copies ``z_bar`` and ``v_bar``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .core import Image, Palette, check_assignment, one_hot
from .operators import GRAD_NORM_SQ, EnergyBreakdown, cost_field, divergence, energy, gradient
from .simplex import project_field

log = logging.getLogger(__name__)

# ||(z, v) -> v - grad z||^2 <= ||grad||^2 + 1.
COUPLING_NORM_SQ = GRAD_NORM_SQ + 1.0
DEFAULT_STEP = 1.0 / math.sqrt(COUPLING_NORM_SQ)


class StepSizeError(ValueError):
    """sigma * tau * L^2 exceeds 1."""


class DivergenceError(RuntimeError):
    """The iteration produced NaN or Inf."""


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.1
    mu: float = 0.01
    sigma: float = DEFAULT_STEP
    tau: float = DEFAULT_STEP
    max_iter: int = 2000
    tol: float = 1e-5
    record_energy_every: int = 0

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lambda and mu must be nonnegative")
        if self.sigma <= 0 or self.tau <= 0:
            raise ValueError("sigma and tau must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.record_energy_every < 0:
            raise ValueError("record_energy_every must be nonnegative")
        prod = self.sigma * self.tau * COUPLING_NORM_SQ
        if prod > 1.0 + 1e-12:
            raise StepSizeError(
                f"sigma*tau*L^2 = {prod:.6g} > 1 (L^2 = {COUPLING_NORM_SQ:g}); reduce sigma or tau"
            )

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass
class SolverState:
    z: np.ndarray
    v: np.ndarray
    q: np.ndarray
    z_bar: np.ndarray
    v_bar: np.ndarray
    iter: int = 0
    last_rel_change: float = math.inf


@dataclass
class SolveReport:
    iterations_run: int
    converged: bool
    final_rel_change: float
    energy_trace: list[tuple[int, EnergyBreakdown]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "final_rel_change": self.final_rel_change,
            "energy_trace": [{"iteration": i, **e.as_dict()} for i, e in self.energy_trace],
        }


def nearest_labels(w: np.ndarray) -> np.ndarray:
    """Per-pixel argmin of the cost field; ties go to the lowest label."""
    return np.argmin(w, axis=0)


def initialize_state(f: Image, palette: Palette, w: np.ndarray | None = None) -> SolverState:
    if w is None:
        w = cost_field(f, palette)
    z = one_hot(nearest_labels(w), palette.k)
    v = np.zeros(z.shape + (2,))
    return SolverState(z=z, v=v, q=v.copy(), z_bar=z.copy(), v_bar=v.copy())


def update_dual(state: SolverState, sigma: float) -> np.ndarray:
    return state.q + sigma * (state.v_bar - gradient(state.z_bar))


@njit(cache=True)
def _shrink_pairs(t, threshold, out):
    for i in range(t.shape[0]):
        x = t[i, 0]
        y = t[i, 1]
        mag = np.sqrt(x * x + y * y)
        if mag > threshold:
            s = (mag - threshold) / mag
            out[i, 0] = x * s
            out[i, 1] = y * s
        else:
            # Also covers mag == 0: the 0/0 direction resolves to 0.
            out[i, 0] = 0.0
            out[i, 1] = 0.0


def shrink(t: np.ndarray, threshold: float) -> np.ndarray:
    """Isotropic soft thresholding of the (x, y) pairs in the last axis.

    Each pair is scaled by ``max(|t| - threshold, 0) / |t|``.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    out = np.empty_like(t)
    _shrink_pairs(t.reshape(-1, 2), float(threshold), out.reshape(-1, 2))
    return out


def update_v(state: SolverState, q_next: np.ndarray, lam: float, mu: float, tau: float) -> np.ndarray:
    denom = mu * tau + 1.0
    t = (tau / denom) * (state.v / tau - q_next)
    return shrink(t, lam * tau / denom)


def update_z(state: SolverState, q_next: np.ndarray, w: np.ndarray, tau: float) -> np.ndarray:
    z0 = state.z - tau * (w + divergence(q_next))
    return project_field(z0, validate=False)


def step(state: SolverState, w: np.ndarray, config: SolverConfig) -> SolverState:
    """One full iteration; returns a new state and leaves ``state`` untouched.

    With ``lam == mu == 0`` the split variable v carries no cost, so the
    optimal dual is q = 0. Both are held at zero and the iteration is plain
    projected descent on <z, w>; running the undamped (q, v) pair would only
    add an oscillation that decays very slowly.
    """
    if config.lam == 0 and config.mu == 0:
        q = np.zeros_like(state.q)
        v = np.zeros_like(state.v)
    else:
        q = update_dual(state, config.sigma)
        v = update_v(state, q, config.lam, config.mu, config.tau)
    z = update_z(state, q, w, config.tau)
    rel = float(np.linalg.norm(z - state.z) / max(np.linalg.norm(state.z), 1.0))
    return SolverState(
        z=z,
        v=v,
        q=q,
        z_bar=2.0 * z - state.z,
        v_bar=2.0 * v - state.v,
        iter=state.iter + 1,
        last_rel_change=rel,
    )


def _finite(state: SolverState) -> bool:
    # z is projected and the projection rejects non-finite input; a NaN or Inf
    # anywhere in q or v poisons their sums.
    return bool(np.isfinite(state.q.sum() + state.v.sum()))


def solve(
    f: Image,
    palette: Palette,
    config: SolverConfig | None = None,
    state: SolverState | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Run the primal-dual iteration and return the relaxed field with a report.

    Stops after ``config.max_iter`` iterations or as soon as
    ``||z_next - z|| / max(||z||, 1) < config.tol``.
    """
    config = config or SolverConfig()
    w = cost_field(f, palette)
    if state is None:
        state = initialize_state(f, palette, w)
    trace: list[tuple[int, EnergyBreakdown]] = []
    every = config.record_energy_every
    if every:
        trace.append((state.iter, energy(state.z, w, config.lam, config.mu)))

    converged = False
    while state.iter < config.max_iter:
        try:
            state = step(state, w, config)
        except ValueError as e:
            raise DivergenceError(f"non-finite values at iteration {state.iter + 1}") from e
        if not _finite(state):
            raise DivergenceError(f"non-finite values at iteration {state.iter}")
        if every and state.iter % every == 0:
            trace.append((state.iter, energy(state.z, w, config.lam, config.mu)))
        if state.last_rel_change < config.tol:
            converged = True
            break

    log.debug("solve: %d iterations, rel change %.3g", state.iter, state.last_rel_change)
    check_assignment(state.z)
    report = SolveReport(
        iterations_run=state.iter,
        converged=converged,
        final_rel_change=state.last_rel_change,
        energy_trace=trace,
    )
    return state.z, report
