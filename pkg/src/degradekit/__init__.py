"""Estimation of spatial and spectral degradation functions for HSI/MSI pairs."""

from .cube import Boundary, ShapeError, conv2d_bandwise, downsample, frobenius_mse, mode3_product
from .degradation import Geometry, ObservedPair, spatial_degrade, spectral_degrade

__version__ = "0.1.0"
