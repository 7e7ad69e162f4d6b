"""Multiphase color image segmentation by a convex relaxation of the lifted Potts model."""

from .core import Image, Palette, ValidationError, new_image, reconstruct
from .operators import EnergyBreakdown, cost_field, divergence, energy, gradient
from .simplex import project_field, project_simplex
from .clustering import Histogram3D, KMeansResult, build_histogram, detect_k, kmeans, read_palette
from .solver import (
    DivergenceError,
    SolveReport,
    SolverConfig,
    SolverState,
    StepSizeError,
    initialize_state,
    solve,
)
from .pipeline import (
    NoiseSpec,
    SAScore,
    Segmentation,
    add_gaussian_noise,
    harden,
    make_phantom,
    segment,
    segmentation_accuracy,
)

__version__ = "0.1.0"
