"""Dense hyperspectral cubes and the three linear primitives.

Cubes are plain ``float64`` arrays of shape ``(height, width, bands)``.
Kernels are 2-D ``(r, r)`` arrays and spectral matrices act on the last
axis. Every degradation in the package is built from
:func:`mode3_product`, :func:`conv2d_bandwise` and :func:`downsample`.
"""

from __future__ import annotations

import enum

import numpy as np


class ShapeError(ValueError):
    """Raised when array dimensions do not fit an operation."""


class Boundary(str, enum.Enum):
    SYMMETRIC = "symmetric"
    REPLICATE = "replicate"
    ZERO = "zero"


_PAD_MODE = {
    Boundary.SYMMETRIC: "symmetric",
    Boundary.REPLICATE: "edge",
    Boundary.ZERO: "constant",
}


def as_cube(data, name: str = "cube") -> np.ndarray:
    """Validate and convert ``data`` to a finite float64 ``(H, W, B)`` cube."""
    cube = np.asarray(data, dtype=np.float64)
    if cube.ndim != 3:
        raise ShapeError(f"{name} must be 3-D (height, width, bands), got shape {cube.shape}")
    if min(cube.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: {cube.shape}")
    if not np.all(np.isfinite(cube)):
        raise ValueError(f"{name} contains non-finite values")
    return cube


def as_kernel(data, name: str = "kernel") -> np.ndarray:
    kernel = np.asarray(data, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] < 1:
        raise ShapeError(f"{name} must be a square 2-D array, got shape {kernel.shape}")
    if not np.all(np.isfinite(kernel)):
        raise ValueError(f"{name} contains non-finite values")
    return kernel


def mode3_product(cube, matrix) -> np.ndarray:
    """Multiply every pixel spectrum by ``matrix``.

    Args:
        cube: array of shape (H, W, B).
        matrix: array of shape (J, B).

    Returns:
        Cube of shape (H, W, J) with ``out[h, w] = matrix @ cube[h, w]``.
    """
    cube = as_cube(cube)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != cube.shape[2]:
        raise ShapeError(
            f"matrix of shape {matrix.shape} cannot act on {cube.shape[2]} bands "
            f"(expected (J, {cube.shape[2]}))"
        )
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix contains non-finite values")
    return cube @ matrix.T


def pad_cube(cube: np.ndarray, size: int, boundary: Boundary | str = Boundary.SYMMETRIC) -> np.ndarray:
    """Pad the spatial axes so that a ``size`` x ``size`` window gives 'same' output.

    The top/left margin is ``(size - 1) // 2``; the remainder goes bottom/right.
    """
    boundary = Boundary(boundary)
    before = (size - 1) // 2
    after = size - 1 - before
    return np.pad(cube, ((before, after), (before, after), (0, 0)), mode=_PAD_MODE[boundary])


def conv2d_bandwise(cube, kernel, boundary: Boundary | str = Boundary.SYMMETRIC) -> np.ndarray:
    """Filter each band with ``kernel`` (cross-correlation, kernel not flipped).

    Output has the input's shape. Pixels outside the image come from
    ``boundary``. Accumulation runs over kernel cells in row-major order,
    so results are reproducible bit for bit.
    """
    cube = as_cube(cube)
    kernel = as_kernel(kernel)
    size = kernel.shape[0]
    height, width, _ = cube.shape
    if size > min(height, width):
        raise ShapeError(f"kernel of size {size} exceeds image of size {height}x{width}")
    padded = pad_cube(cube, size, boundary)
    out = np.zeros_like(cube)
    for a in range(size):
        for c in range(size):
            out += kernel[a, c] * padded[a:a + height, c:c + width, :]
    return out


def downsample(cube, ratio: int, offset: int = 0) -> np.ndarray:
    """Keep every ``ratio``-th pixel starting at ``offset`` along both axes."""
    cube = as_cube(cube)
    ratio = int(ratio)
    if ratio < 1:
        raise ValueError(f"ratio must be a positive integer, got {ratio}")
    if not 0 <= offset < ratio:
        raise ValueError(f"offset must lie in [0, {ratio}), got {offset}")
    height, width, _ = cube.shape
    if height % ratio or width % ratio:
        raise ShapeError(f"image size {height}x{width} is not divisible by ratio {ratio}")
    return cube[offset::ratio, offset::ratio, :].copy()


def frobenius_mse(a, b) -> float:
    """Mean of squared differences over all voxels."""
    a = as_cube(a, "a")
    b = as_cube(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff * diff))
