"""Reading and writing images, label maps and run reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import Image

IMAGE_FORMATS = {".png": "PNG", ".ppm": "PPM"}


class ImageReadError(OSError):
    pass


def read_image(path) -> tuple[Image, str]:
    """Load an 8-bit PNG or binary PPM as an :class:`Image`; also return its format."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            fmt = im.format
            rgb = np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as e:
        raise ImageReadError(f"cannot read image {path}: {e}") from e
    if fmt not in IMAGE_FORMATS.values():
        raise ImageReadError(f"{path}: unsupported format {fmt}; expected PNG or PPM")
    return Image.from_uint8(rgb), fmt


def write_image(path, img: Image, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or IMAGE_FORMATS.get(path.suffix.lower(), "PNG")
    PILImage.fromarray(img.to_uint8(), mode="RGB").save(path, format=fmt)
    return path


def image_suffix(fmt: str) -> str:
    return {v: k for k, v in IMAGE_FORMATS.items()}[fmt]


def write_labels_csv(path, labels: np.ndarray) -> Path:
    path = Path(path)
    rows = (",".join(str(int(v)) for v in row) for row in np.asarray(labels))
    path.write_text("\n".join(rows) + "\n")
    return path


def write_labels_pgm(path, labels: np.ndarray) -> Path:
    labels = np.asarray(labels)
    if labels.max(initial=0) > 255:
        raise ValueError("label values above 255 do not fit an 8-bit graymap")
    path = Path(path)
    PILImage.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PPM")
    return path


def read_labels(path) -> np.ndarray:
    """Integer label map from a CSV file or an 8-bit graymap (``.pgm``)."""
    path = Path(path)
    try:
        if path.suffix.lower() in (".pgm", ".png"):
            with PILImage.open(path) as im:
                return np.asarray(im.convert("L")).astype(np.int64)
        labels = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except (OSError, ValueError) as e:
        raise ImageReadError(f"cannot read label map {path}: {e}") from e
    if labels.min(initial=0) < 0:
        raise ImageReadError(f"{path}: negative label")
    return labels


@dataclass
class RunReport:
    """Everything needed to reproduce one segmentation run.

    Keys, in serialization order: ``input``, ``k``, ``palette``, ``solver``,
    ``solve``, ``energy``, ``sa``, ``wall_ms``. ``sa`` is null without ground
    truth; ``wall_ms`` is null unless timing was requested.
    """

    input: dict
    k: int
    palette: list
    solver: dict
    solve: dict
    energy: dict
    sa: dict | None = None
    wall_ms: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        if not d["extra"]:
            del d["extra"]
        return json.dumps(d, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path
