"""Spectrum sensing: synthetic wideband frames, a 1D Faster-RCNN detector, an energy baseline and metrics."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
