"""End-to-end segmentation, hardening, accuracy scoring and synthetic test images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.optimize import linear_sum_assignment

from .clustering import DEFAULT_BINS, build_histogram, detect_k, kmeans
from .core import Image, Palette, ValidationError, check_assignment, one_hot, reconstruct
from .solver import SolveReport, SolverConfig, solve


@dataclass(eq=False)
class Segmentation:
    labels: np.ndarray
    palette: Palette
    relaxed_z: np.ndarray
    report: SolveReport | None = None

    @property
    def k(self) -> int:
        return self.palette.k

    def image(self) -> Image:
        """Piecewise-constant image: every pixel takes its label's palette color."""
        return reconstruct(one_hot(self.labels, self.k), self.palette)


@dataclass(frozen=True)
class NoiseSpec:
    mean: float = 0.0
    variance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be nonnegative")


@dataclass
class SAScore:
    value: float
    overlap_matrix: np.ndarray
    matching: list[tuple[int, int]]

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "overlap_matrix": self.overlap_matrix.tolist(),
            "matching": [list(m) for m in self.matching],
        }


def harden(z: np.ndarray) -> np.ndarray:
    """Per-pixel argmax of a relaxed field, ties to the lowest label."""
    z = check_assignment(z)
    return np.argmax(z, axis=0)


# Auto-K defaults: spatial Gaussian pre-blur (pixels) and minimum basin share.
DEFAULT_PRESMOOTH = 1.5
DEFAULT_MIN_PEAK_FRACTION = 0.03


def auto_k(
    f: Image,
    bins: int = DEFAULT_BINS,
    presmooth: float = DEFAULT_PRESMOOTH,
    min_peak_fraction: float = DEFAULT_MIN_PEAK_FRACTION,
) -> int:
    """Estimate K by hill-climbing on the color histogram.

    On noisy input every noise speck is a histogram peak, so the image is
    first blurred by ``presmooth`` pixels and peaks whose basin holds less
    than ``min_peak_fraction`` of the pixels are ignored. Setting both to 0
    gives the plain peak count. The result never exceeds the number of
    distinct colors in ``f``, which blurring can otherwise inflate on small
    images.
    """
    g = f
    if presmooth > 0:
        g = Image(np.clip(gaussian_filter(f.data, (presmooth, presmooth, 0), mode="nearest"), 0.0, 1.0))
    k = detect_k(build_histogram(g, bins), min_peak_fraction)
    n_colors = len(np.unique(f.pixels(), axis=0))
    return min(k, n_colors)


def resolve_palette(
    f: Image,
    k: int | None = None,
    palette: Palette | None = None,
    bins: int = DEFAULT_BINS,
    seed: int = 0,
    presmooth: float = DEFAULT_PRESMOOTH,
    min_peak_fraction: float = DEFAULT_MIN_PEAK_FRACTION,
) -> Palette:
    if k is not None and palette is not None:
        raise ValueError("give at most one of k and palette")
    if palette is not None:
        return palette
    if k is None:
        k = auto_k(f, bins, presmooth, min_peak_fraction)
    return kmeans(f, k, seed=seed).palette


def segment(
    f: Image,
    k: int | None = None,
    palette: Palette | None = None,
    solver: SolverConfig | None = None,
    bins: int = DEFAULT_BINS,
    seed: int = 0,
    presmooth: float = DEFAULT_PRESMOOTH,
    min_peak_fraction: float = DEFAULT_MIN_PEAK_FRACTION,
) -> Segmentation:
    """Resolve a palette (given, K-means with ``k``, or auto-detected K), solve, harden."""
    pal = resolve_palette(
        f, k=k, palette=palette, bins=bins, seed=seed,
        presmooth=presmooth, min_peak_fraction=min_peak_fraction,
    )
    z, report = solve(f, pal, solver or SolverConfig())
    return Segmentation(labels=harden(z), palette=pal, relaxed_z=z, report=report)


def gaussian_noise(shape, spec: NoiseSpec) -> np.ndarray:
    """Unclamped i.i.d. Normal(mean, variance) draws, reproducible from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    return rng.normal(spec.mean, np.sqrt(spec.variance), size=shape)


def add_gaussian_noise(f: Image, spec: NoiseSpec) -> Image:
    """Add noise per pixel and channel, then clamp to [0, 1]."""
    return Image(np.clip(f.data + gaussian_noise(f.data.shape, spec), 0.0, 1.0))


def overlap_matrix(pred: np.ndarray, truth: np.ndarray, k_pred: int | None = None, k_truth: int | None = None):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    kp = int(k_pred if k_pred is not None else pred.max() + 1)
    kt = int(k_truth if k_truth is not None else truth.max() + 1)
    return np.bincount(pred * kt + truth, minlength=kp * kt).reshape(kp, kt)


def segmentation_accuracy(pred, truth: np.ndarray) -> SAScore:
    """Fraction of pixels in matched regions under the best one-to-one label matching.

    ``pred`` is a :class:`Segmentation` or a label array.
    """
    k_pred = None
    if isinstance(pred, Segmentation):
        k_pred = pred.k
        pred = pred.labels
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch: prediction {pred.shape} vs truth {truth.shape}")
    if pred.size == 0:
        raise ValidationError("empty label maps")
    m = overlap_matrix(pred, truth, k_pred)
    rows, cols = linear_sum_assignment(m, maximize=True)
    matched = int(m[rows, cols].sum())
    return SAScore(
        value=matched / pred.size,
        overlap_matrix=m,
        matching=[(int(r), int(c)) for r, c in zip(rows, cols)],
    )


# Phantom geometry in fractions of the image side.
THREE_PHASE_COLORS = np.array(
    [
        [1.0, 1.0, 1.0],  # background
        [1.0, 0.0, 0.0],  # disc
        [0.0, 1.0, 0.0],  # square
        [0.0, 0.0, 1.0],  # triangle
    ]
)
SIX_PHASE_COLORS = np.array(
    [
        [0.0, 0.0, 0.0],  # background
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
    ]
)
# (center row, center col, radius); later circles are drawn on top.
SIX_PHASE_CIRCLES = [
    (0.30, 0.30, 0.20),
    (0.30, 0.68, 0.20),
    (0.50, 0.50, 0.16),
    (0.70, 0.30, 0.20),
    (0.70, 0.68, 0.20),
]
TWO_PHASE_COLORS = np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
PHANTOM_KINDS = ("two-phase", "three-phase", "six-phase")


def _two_phase_labels(size: int) -> np.ndarray:
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    return ((yy - 0.5) ** 2 + (xx - 0.5) ** 2 <= 0.3**2).astype(np.int64)


def _three_phase_labels(size: int) -> np.ndarray:
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    labels = np.zeros((size, size), dtype=np.int64)
    labels[(yy - 0.30) ** 2 + (xx - 0.28) ** 2 <= 0.18**2] = 1
    labels[(np.abs(yy - 0.30) <= 0.16) & (np.abs(xx - 0.74) <= 0.16)] = 2
    # Isosceles triangle, apex up, lower half of the image.
    tri = (yy >= 0.55) & (yy <= 0.88) & (np.abs(xx - 0.50) <= (yy - 0.55) * 0.30 / 0.33)
    labels[tri] = 3
    return labels


def _six_phase_labels(size: int) -> np.ndarray:
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    labels = np.zeros((size, size), dtype=np.int64)
    for i, (cy, cx, r) in enumerate(SIX_PHASE_CIRCLES, start=1):
        labels[(yy - cy) ** 2 + (xx - cx) ** 2 <= r**2] = i
    return labels


def make_phantom(kind: str, size: int = 128) -> tuple[Image, np.ndarray, Palette]:
    """Piecewise-constant test image with its exact label map and palette.

    ``two-phase``: one centered disc on a light background (2 colors).
    ``three-phase``: a disc, a square and a triangle on a light background
    (4 colors). ``six-phase``: five overlapping circles on a dark background
    (6 colors).
    """
    if size < 16:
        raise ValueError("phantom size must be at least 16")
    if kind == "two-phase":
        labels, colors = _two_phase_labels(size), TWO_PHASE_COLORS
    elif kind == "three-phase":
        labels, colors = _three_phase_labels(size), THREE_PHASE_COLORS
    elif kind == "six-phase":
        labels, colors = _six_phase_labels(size), SIX_PHASE_COLORS
    else:
        raise ValueError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")
    return Image(colors[labels]), labels, Palette(colors)

