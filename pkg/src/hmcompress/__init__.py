"""Adaptive error-bounded hierarchical matrices for neural network weight compression."""

__version__ = "0.1.0"

from .hmatrix import (  # noqa: E402
    BuildConfig,
    HMatrix,
    build_adaptive,
    error_bound,
    hmatvec,
    measured_error,
    reconstruct,
    storage_stats,
)
from .linalg import spectrum, svd, truncation_rank  # noqa: E402
