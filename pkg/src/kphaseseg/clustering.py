"""Palette estimation: histogram peak counting for K, then K-means for the colors."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Image, Palette, ValidationError

DEFAULT_BINS = 16
K_MIN, K_MAX = 2, 16
DEFAULT_N_INIT = 10


@dataclass(frozen=True, eq=False)
class Histogram3D:
    counts: np.ndarray

    @property
    def bins_per_channel(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(eq=False)
class KMeansResult:
    palette: Palette
    assignments: np.ndarray
    inertia: float
    iterations: int
    inertia_trace: list[float] = field(default_factory=list)


def build_histogram(f: Image, bins: int = DEFAULT_BINS) -> Histogram3D:
    """Count pixels per RGB cell of a ``bins**3`` grid; 1.0 falls in the last bin."""
    if bins < 2:
        raise ValueError("bins must be at least 2")
    idx = np.minimum(np.floor(f.pixels() * bins).astype(np.int64), bins - 1)
    flat = np.ravel_multi_index(idx.T, (bins, bins, bins))
    counts = np.bincount(flat, minlength=bins**3).reshape(bins, bins, bins)
    return Histogram3D(counts)


# Neighbor offsets in increasing flat-index order, so argmax picks the lowest index on ties.
_OFFSETS = [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]


def climb_targets(hist: Histogram3D) -> np.ndarray:
    """Flat index of the bin each bin's steepest-ascent walk terminates at."""
    c = hist.counts.astype(np.int64)
    b = c.shape[0]
    padded = np.pad(c, 1, constant_values=-1)
    neigh = np.stack(
        [padded[1 + di : 1 + di + b, 1 + dj : 1 + dj + b, 1 + dk : 1 + dk + b] for di, dj, dk in _OFFSETS]
    )
    best = neigh.argmax(axis=0)
    best_count = np.take_along_axis(neigh, best[None], axis=0)[0]

    grid = np.indices(c.shape)
    offs = np.array(_OFFSETS)[best]  # (b, b, b, 3)
    target = np.ravel_multi_index(tuple(grid[a] + offs[..., a] for a in range(3)), c.shape, mode="clip")
    self_idx = np.arange(c.size).reshape(c.shape)
    nxt = np.where(best_count > c, target, self_idx).ravel()

    # Counts strictly increase along a walk, so pointer jumping reaches a fixed point.
    while True:
        jumped = nxt[nxt]
        if np.array_equal(jumped, nxt):
            return nxt
        nxt = jumped


def peak_masses(hist: Histogram3D) -> dict[int, int]:
    """Map each peak (flat bin index) to the pixel count of its basin."""
    if hist.total == 0:
        raise ValueError("histogram is empty")
    ends = climb_targets(hist)
    counts = hist.counts.ravel()
    mass = np.bincount(ends, weights=counts, minlength=counts.size)
    return {int(p): int(mass[p]) for p in np.flatnonzero(mass)}


def count_peaks(hist: Histogram3D, min_fraction: float = 0.0) -> int:
    """Number of distinct terminal bins reached from the nonzero bins.

    With ``min_fraction > 0`` a peak only counts if its basin holds at least
    that fraction of all pixels.
    """
    masses = peak_masses(hist)
    if min_fraction <= 0:
        return len(masses)
    cut = min_fraction * hist.total
    return sum(m >= cut for m in masses.values())


def detect_k(hist: Histogram3D, min_fraction: float = 0.0) -> int:
    """Hill-climbing cluster count, clamped to ``[2, 16]``."""
    return int(np.clip(count_peaks(hist, min_fraction), K_MIN, K_MAX))


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # (N, K) squared distances, computed directly for exact zeros on matches.
    d = x[:, None, :] - c[None, :, :]
    return np.einsum("nkc,nkc->nk", d, d)


def _init_centroids(x: np.ndarray, k: int, rng: np.random.Generator, n_trials: int) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = _sq_dist(x, centers[0][None])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            break
        cand = rng.choice(n, size=n_trials, p=closest / total)
        d = _sq_dist(x, x[cand])
        pot = np.minimum(closest[:, None], d).sum(axis=0)
        best = int(np.argmin(pot))
        centers.append(x[cand[best]])
        closest = np.minimum(closest, d[:, best])
    return np.array(centers)


def kmeans(
    f: Image,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    n_init: int = DEFAULT_N_INIT,
    init: np.ndarray | None = None,
) -> KMeansResult:
    """K-means (Lloyd) clustering of the image's RGB pixels.

    Parameters
    ----------
    f : Image
        Pixels to cluster.
    k : int
        Number of clusters, at least 2 and at most the number of distinct colors.
    seed : int
        Seeds every random choice; equal seeds give identical results.
    max_iter : int
        Cap on update steps per run.
    n_init : int
        Independent seedings; the run with the lowest inertia is returned.
    init : np.ndarray, optional
        ``(k, 3)`` starting centroids. Overrides seeding and ``n_init``.

    Notes
    -----
    Seeding is greedy k-means++: each new center is the best (by resulting
    inertia) of a few candidates drawn proportionally to squared distance.
    Clusters that go empty are re-seeded at the pixel farthest from its
    current centroid.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if max_iter < 1 or n_init < 1:
        raise ValueError("max_iter and n_init must be positive")
    x = f.pixels()
    n_distinct = np.unique(x, axis=0).shape[0]
    if k > n_distinct:
        raise ValidationError(f"k={k} exceeds the number of distinct colors ({n_distinct})")

    if init is not None:
        return _lloyd(x, np.array(init, dtype=np.float64).reshape(k, 3), max_iter, f.shape)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = _init_centroids(x, k, rng, n_trials=2 + int(np.log(k)))
        if centers.shape[0] < k:
            raise ValidationError("could not seed k distinct centroids")
        res = _lloyd(x, centers, max_iter, f.shape)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int, shape) -> KMeansResult:
    k = centers.shape[0]

    labels = None
    trace: list[float] = []
    n_updates = 0
    for it in range(1, max_iter + 2):
        d = _sq_dist(x, centers)
        new_labels = d.argmin(axis=1)
        mind = d[np.arange(x.shape[0]), new_labels]
        trace.append(float(mind.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        if it > max_iter:
            break
        n_updates += 1

        sizes = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(sizes == 0):
            far = int(np.argmax(mind))
            labels[far] = j
            mind[far] = 0.0
            sizes = np.bincount(labels, minlength=k)
        sums = np.stack([np.bincount(labels, weights=x[:, c], minlength=k) for c in range(3)], axis=1)
        centers = sums / sizes[:, None]

    centers = np.clip(centers, 0.0, 1.0)
    return KMeansResult(
        palette=Palette(centers),
        assignments=labels.reshape(shape),
        inertia=trace[-1],
        iterations=n_updates,
        inertia_trace=trace,
    )


def read_palette(path) -> Palette:
    """Parse a palette file: one ``r, g, b`` line per color, ``#`` starts a comment."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 3 comma-separated values")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise ValidationError(f"{path}:{lineno}: {e}") from None
    return Palette(np.array(rows).reshape(-1, 3))


def format_palette(palette: Palette) -> str:
    lines = [f"# {palette.k} colors, RGB in [0, 1]"]
    lines += [", ".join(repr(float(v)) for v in c) for c in palette.colors]
    return "\n".join(lines) + "\n"


def write_palette(path, palette: Palette) -> None:
    Path(path).write_text(format_palette(palette))
