"""Weakly supervised dense-tissue segmentation from image-level density labels.

A small U-Net learns a pixel-wise dense-tissue mask supervised only by
per-image percent-density classes, through a loss that ties the mask's area
inside the breast region to the density target.  Includes a minimal
reverse-mode autodiff core (numba-accelerated with a numpy fallback), a
deterministic phantom generator with exact ground truth, regression /
ordinal-classification / segmentation metrics, and a training CLI.
"""

from .backend import BACKEND, HAS_NUMBA
from .errors import (
    CheckpointError,
    DomainError,
    GenerationError,
    NumericError,
    PgmError,
    ShapeError,
    WdsmError,
)
from .tensor import Precision, Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "Precision",
    "Tape",
    "Tensor",
    "WdsmError",
    "ShapeError",
    "DomainError",
    "NumericError",
    "PgmError",
    "CheckpointError",
    "GenerationError",
    "__version__",
]
