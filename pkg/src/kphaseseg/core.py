"""Dense array data model: images, palettes, assignment and cost fields.

Arrays are float64 throughout. Fields use a label-major layout ``(K, H, W)``
so that the per-pixel K-vector of pixel ``(i, j)`` is ``z[:, i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when an array violates the invariants of its type."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Image:
    """RGB image with intensities in [0, 1], stored as ``(H, W, 3)`` float64."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValidationError(f"image must have shape (H, W, 3), got {a.shape}")
        a = _frozen(a)
        if not np.all(np.isfinite(a)):
            raise ValidationError("image contains non-finite intensities")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValidationError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    def pixels(self) -> np.ndarray:
        """Row-major ``(H*W, 3)`` view of the pixel colors."""
        return self.data.reshape(-1, 3)

    @classmethod
    def from_uint8(cls, a: np.ndarray) -> "Image":
        return cls(np.asarray(a, dtype=np.float64) / 255.0)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.data * 255.0), 0, 255).astype(np.uint8)


def new_image(height: int, width: int, data) -> Image:
    """Build an image from a flat (or already shaped) sequence of intensities.

    >>> new_image(1, 1, [0, 0, 0]).shape
    (1, 1)
    """
    if int(height) < 1 or int(width) < 1:
        raise ValidationError("height and width must be positive")
    flat = np.asarray(data, dtype=np.float64).ravel()
    if flat.size != height * width * 3:
        raise ValidationError(
            f"expected {height * width * 3} intensities for a {height}x{width} image, got {flat.size}"
        )
    return Image(flat.reshape(height, width, 3))


@dataclass(frozen=True, eq=False)
class Palette:
    """Ordered set of K >= 2 pairwise distinct RGB colors in [0, 1]."""

    colors: np.ndarray

    def __post_init__(self):
        c = _frozen(np.asarray(self.colors, dtype=np.float64))
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValidationError(f"palette must have shape (K, 3), got {c.shape}")
        if c.shape[0] < 2:
            raise ValidationError("palette needs at least 2 colors")
        if not np.all(np.isfinite(c)) or c.min() < 0.0 or c.max() > 1.0:
            raise ValidationError("palette components must lie in [0, 1]")
        if len(np.unique(c, axis=0)) != c.shape[0]:
            raise ValidationError("palette colors must be pairwise distinct")
        object.__setattr__(self, "colors", c)

    def __len__(self) -> int:
        return self.colors.shape[0]

    @property
    def k(self) -> int:
        return self.colors.shape[0]

    def permuted(self, perm) -> "Palette":
        return Palette(self.colors[np.asarray(perm)])

    def __eq__(self, other) -> bool:
        return isinstance(other, Palette) and np.array_equal(self.colors, other.colors)

    __hash__ = None


def check_assignment(z: np.ndarray, *, hard: bool = False, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a ``(K, H, W)`` assignment field and return it as float64.

    Every weight must be nonnegative and every pixel's weights must sum to 1
    within ``tol``; with ``hard=True`` the weights must additionally be 0 or 1.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3 or z.shape[0] < 1:
        raise ValidationError(f"assignment field must have shape (K, H, W), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValidationError("assignment field contains non-finite weights")
    if z.min() < 0.0:
        raise ValidationError("assignment weights must be nonnegative")
    if hard:
        if not np.all((z == 0.0) | (z == 1.0)) or not np.all(z.sum(axis=0) == 1.0):
            raise ValidationError("hard assignment field must be one-hot at every pixel")
    elif np.max(np.abs(z.sum(axis=0) - 1.0)) > tol:
        raise ValidationError("assignment weights must sum to 1 at every pixel")
    return z


def is_assignment(z: np.ndarray, *, hard: bool = False) -> bool:
    try:
        check_assignment(z, hard=hard)
    except ValidationError:
        return False
    return True


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    """Hard ``(K, H, W)`` field from an ``(H, W)`` array of label indices."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"label indices must lie in [0, {k})")
    return (np.arange(k)[:, None, None] == labels[None]).astype(np.float64)


def reconstruct(z: np.ndarray, palette: Palette) -> Image:
    """Color image ``u_n = sum_k z[k, n] * c_k`` from an assignment field."""
    z = check_assignment(z)
    if z.shape[0] != palette.k:
        raise ValidationError(
            f"field has {z.shape[0]} labels but palette has {palette.k} colors"
        )
    u = np.einsum("khw,kc->hwc", z, palette.colors)
    # Convex combinations can overshoot [0, 1] by one ulp.
    return Image(np.clip(u, 0.0, 1.0))


def check_vector_field(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 4 or p.shape[-1] != 2:
        raise ValidationError(f"vector field must have shape (K, H, W, 2), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("vector field contains non-finite entries")
    return p
