"""Forward degradation model and synthetic test data.

The observed pair is produced from a ground-truth cube ``Z``::

    X = D(Z * kernel)          low-resolution HSI
    Y = Z x_3 srf^T            high-resolution MSI

Both operators act on disjoint modes, so degrading ``X`` spectrally and
``Y`` spatially gives the same low-resolution multispectral cube.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from .cube import (
    Boundary,
    ShapeError,
    as_cube,
    as_kernel,
    conv2d_bandwise,
    downsample,
    mode3_product,
)


@dataclass(frozen=True)
class Geometry:
    """Spatial relation between the MSI grid and the HSI grid.

    ``offset`` defaults to ``ratio // 2`` (centre of each block) and
    ``kernel_size`` to ``ratio``.
    """

    ratio: int
    boundary: Boundary = Boundary.SYMMETRIC
    offset: Optional[int] = None
    kernel_size: Optional[int] = None

    def __post_init__(self):
        if int(self.ratio) < 1:
            raise ValueError(f"ratio must be a positive integer, got {self.ratio}")
        object.__setattr__(self, "ratio", int(self.ratio))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.offset is None:
            object.__setattr__(self, "offset", self.ratio // 2)
        if not 0 <= self.offset < self.ratio:
            raise ValueError(f"offset must lie in [0, {self.ratio}), got {self.offset}")
        if self.kernel_size is None:
            object.__setattr__(self, "kernel_size", self.ratio)
        if self.kernel_size < 1:
            raise ValueError(f"kernel_size must be positive, got {self.kernel_size}")

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "boundary": self.boundary.value,
            "offset": self.offset,
            "kernel_size": self.kernel_size,
        }


@dataclass
class ObservedPair:
    """Low-resolution HSI ``(m, n, B)`` and high-resolution MSI ``(M, N, b)``."""

    hsi: np.ndarray
    msi: np.ndarray
    ratio: int

    def __post_init__(self):
        self.hsi = as_cube(self.hsi, "hsi")
        self.msi = as_cube(self.msi, "msi")
        m, n, bands = self.hsi.shape
        big_m, big_n, msi_bands = self.msi.shape
        if big_m != self.ratio * m or big_n != self.ratio * n:
            raise ShapeError(
                f"MSI size {big_m}x{big_n} is not ratio {self.ratio} times HSI size {m}x{n}"
            )
        if not bands > msi_bands >= 1:
            raise ShapeError(f"need HSI bands > MSI bands >= 1, got {bands} and {msi_bands}")

    @property
    def hsi_bands(self) -> int:
        return self.hsi.shape[2]

    @property
    def msi_bands(self) -> int:
        return self.msi.shape[2]


def spatial_degrade(cube, kernel, ratio: int, boundary=Boundary.SYMMETRIC, offset: Optional[int] = None):
    """Blur every band with ``kernel`` and decimate by ``ratio``."""
    if offset is None:
        offset = int(ratio) // 2
    return downsample(conv2d_bandwise(cube, kernel, boundary), ratio, offset)


def spectral_degrade(cube, srf) -> np.ndarray:
    """Map ``B`` bands to ``b`` bands with a ``(B, b)`` response matrix."""
    srf = np.asarray(srf, dtype=np.float64)
    cube = as_cube(cube)
    if srf.ndim != 2 or srf.shape[0] != cube.shape[2]:
        raise ShapeError(f"SRF of shape {srf.shape} does not match {cube.shape[2]} input bands")
    return mode3_product(cube, srf.T)


def degrade_pair(truth, kernel, srf, geometry: Geometry) -> ObservedPair:
    hsi = spatial_degrade(truth, kernel, geometry.ratio, geometry.boundary, geometry.offset)
    msi = spectral_degrade(truth, srf)
    return ObservedPair(hsi, msi, geometry.ratio)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Isotropic Gaussian centred on the grid, normalized to unit sum."""
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    centre = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - centre
    sq = coords[:, None] ** 2 + coords[None, :] ** 2
    weights = np.exp(-sq / (2.0 * sigma * sigma))
    return weights / weights.sum()


def average_kernel(size: int) -> np.ndarray:
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    return np.full((size, size), 1.0 / (size * size))


def parse_kernel(text: str) -> np.ndarray:
    """Build a kernel from ``gaussian:SIZE:SIGMA`` or ``average:SIZE``."""
    parts = text.split(":")
    try:
        if parts[0] == "gaussian" and len(parts) == 3:
            return gaussian_kernel(int(parts[1]), float(parts[2]))
        if parts[0] == "average" and len(parts) == 2:
            return average_kernel(int(parts[1]))
    except ValueError as exc:
        raise ValueError(f"bad kernel spec {text!r}: {exc}") from None
    raise ValueError(f"bad kernel spec {text!r}; expected gaussian:SIZE:SIGMA or average:SIZE")


@dataclass
class SrfProfile:
    """Parametric family of synthetic spectral responses.

    ``kind`` is ``"gaussian"`` (bumps whose width is a standard deviation)
    or ``"box"`` (flat bands whose width is the full extent). ``overlap``
    is ``"full"`` or ``"limited"``; limited curves are cut to disjoint
    band segments. ``floor`` is added to every entry afterwards.
    Centres and widths default to an even tiling of the input bands.
    """

    kind: str = "gaussian"
    centers: Optional[Sequence[float]] = None
    widths: Optional[Sequence[float]] = None
    overlap: str = "full"
    floor: float = 0.0


def _overlap_fraction(a: np.ndarray, b: np.ndarray) -> float:
    a = a / a.sum()
    b = b / b.sum()
    return float(np.minimum(a, b).sum())


def synth_srf(hsi_bands: int, msi_bands: int, profile: SrfProfile = SrfProfile(), seed: int = 0) -> np.ndarray:
    """Synthetic ``(B, b)`` response matrix; each column peaks at 1 before the floor.

    Gaussian bumps get a seeded jitter of centre, width and amplitude, so
    two seeds give two different matrices. Box bands are exact.
    """
    big_b, b = int(hsi_bands), int(msi_bands)
    if not 1 <= b < big_b:
        raise ValueError(f"need 1 <= MSI bands < HSI bands, got {b} and {big_b}")
    if profile.kind not in ("gaussian", "box"):
        raise ValueError(f"unknown SRF kind {profile.kind!r}")
    if profile.overlap not in ("full", "limited"):
        raise ValueError(f"unknown overlap regime {profile.overlap!r}")
    if profile.floor < 0:
        raise ValueError("floor must be nonnegative")

    spacing = big_b / b
    if profile.centers is None:
        centers = (np.arange(b) + 0.5) * spacing - 0.5
    else:
        centers = np.asarray(profile.centers, dtype=np.float64)
    if profile.widths is None:
        if profile.kind == "gaussian":
            scale = 0.6 if profile.overlap == "full" else 0.35
        else:
            scale = 1.5 if profile.overlap == "full" else 1.0
        widths = np.full(b, scale * spacing)
    else:
        widths = np.asarray(profile.widths, dtype=np.float64)
    if centers.shape != (b,) or widths.shape != (b,):
        raise ValueError(f"need {b} centres and {b} widths")
    if np.any(widths <= 0):
        raise ValueError("widths must be positive")
    if np.any(centers < 0) or np.any(centers >= big_b):
        raise ValueError(f"centres must lie in [0, {big_b})")
    if np.any(np.diff(centers) <= 0):
        raise ValueError("centres must be strictly increasing")

    bands = np.arange(big_b, dtype=np.float64)
    if profile.kind == "gaussian":
        rng = np.random.default_rng(seed)
        centers = centers + rng.uniform(-0.25, 0.25, b)
        widths = widths * rng.uniform(0.9, 1.1, b)
        amplitude = rng.uniform(0.8, 1.0, b)
        curves = amplitude * np.exp(-((bands[:, None] - centers[None, :]) ** 2) / (2.0 * widths ** 2))
    else:
        curves = (np.abs(bands[:, None] - centers[None, :]) < widths[None, :] / 2.0).astype(np.float64)

    if profile.overlap == "limited":
        edges = np.concatenate(([-np.inf], (centers[1:] + centers[:-1]) / 2.0, [np.inf]))
        inside = (bands[:, None] >= edges[None, :-1]) & (bands[:, None] < edges[None, 1:])
        if profile.kind == "box" and np.any((curves > 0) & ~inside):
            raise ValueError("box widths too large for disjoint (limited-overlap) supports")
        curves = np.where(inside, curves, 0.0)

    if np.any(curves.max(axis=0) <= 0):
        raise ValueError("infeasible SRF geometry: some response curve covers no band")
    if profile.overlap == "full" and b > 1:
        for j in range(b - 1):
            shared = _overlap_fraction(curves[:, j], curves[:, j + 1])
            if shared < 0.2:
                raise ValueError(
                    f"full-overlap profile requested but curves {j} and {j + 1} share only {shared:.0%}"
                )
    return curves + profile.floor


@dataclass
class SceneSpec:
    """Linear-mixture scene parameters.

    ``smoothness`` is the spectral correlation length of the endmembers in
    bands; ``spatial_scale`` the abundance correlation length in pixels.
    """

    height: int
    width: int
    bands: int
    endmember_count: int = 4
    smoothness: float = 2.0
    spatial_scale: float = 1.5
    contrast: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if min(self.height, self.width, self.bands, self.endmember_count) < 1:
            raise ValueError("scene dimensions and endmember count must be positive")
        if self.endmember_count > self.bands:
            raise ValueError("endmember count cannot exceed the number of bands")


@dataclass
class SceneFactors:
    abundances: np.ndarray  # (H, W, p), rows sum to one
    endmembers: np.ndarray  # (B, p), entries in (0, 1]
    cube: np.ndarray = field(repr=False, default=None)


def synth_scene_factors(spec: SceneSpec) -> SceneFactors:
    rng = np.random.default_rng(spec.seed)
    p = spec.endmember_count

    spectra = rng.standard_normal((spec.bands, p))
    if spec.smoothness > 0:
        spectra = gaussian_filter1d(spectra, spec.smoothness, axis=0, mode="reflect")
    lo = spectra.min(axis=0, keepdims=True)
    span = spectra.max(axis=0, keepdims=True) - lo
    span[span == 0] = 1.0
    endmembers = 0.05 + 0.95 * (spectra - lo) / span

    noise = rng.standard_normal((spec.height, spec.width, p))
    if spec.spatial_scale > 0:
        noise = gaussian_filter(noise, sigma=(spec.spatial_scale, spec.spatial_scale, 0), mode="wrap")
    std = noise.std()
    if std > 0:
        noise = (noise - noise.mean()) / std
    logits = spec.contrast * noise
    logits -= logits.max(axis=2, keepdims=True)
    weights = np.exp(logits)
    abundances = weights / weights.sum(axis=2, keepdims=True)

    cube = abundances @ endmembers.T
    np.clip(cube, 0.0, 1.0, out=cube)
    return SceneFactors(abundances, endmembers, cube)


def synth_scene(spec: SceneSpec) -> np.ndarray:
    """Ground-truth cube of a nonnegative linear mixture, values in [0, 1]."""
    return synth_scene_factors(spec).cube


def add_noise(cube, snr_db: float, seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise at the given signal-to-noise ratio (dB)."""
    cube = as_cube(cube)
    power = float(np.mean(cube * cube))
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return cube + sigma * rng.standard_normal(cube.shape)


def check_kernel_simplex(kernel, tol: float = 1e-12) -> bool:
    kernel = as_kernel(kernel)
    return bool(np.all(kernel > 0) and np.all(kernel < 1) and abs(kernel.sum() - 1.0) <= tol)
