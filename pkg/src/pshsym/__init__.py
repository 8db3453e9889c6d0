"""Schwarz-type symmetrization of S^1-invariant psh functions on the model ball."""

from .kernels import BACKEND
from .model_measure import MCConfig, ModelGeometry

__version__ = "0.1.0"

__all__ = ["BACKEND", "MCConfig", "ModelGeometry", "__version__"]
