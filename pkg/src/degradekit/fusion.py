"""Minimal coupled nonnegative matrix factorization (CNMF) fusion.

The HSI and MSI are unmixed alternately with shared factors:

* HSI stage: ``X ~ E @ A_low`` updating endmembers ``E`` and low-resolution
  abundances, with ``A_low`` initialised from the spatially degraded
  high-resolution abundances.
* MSI stage: ``Y ~ (srf^T E) @ A_high`` with the degraded endmembers held
  fixed, updating the high-resolution abundances.

The fused cube is ``E @ A_high`` folded back to ``(M, N, B)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cube import ShapeError, as_kernel
from .degradation import Geometry, ObservedPair, spatial_degrade

log = logging.getLogger(__name__)


class FusionDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class CnmfConfig:
    endmembers: int = 4
    outer_iterations: int = 30
    inner_iterations: int = 50
    epsilon: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if min(self.endmembers, self.outer_iterations, self.inner_iterations) < 1:
            raise ValueError("CNMF counts must be positive")


@dataclass
class Factorization:
    endmember_matrix: np.ndarray  # (B, p)
    abundance_cube: np.ndarray  # (M, N, p)

    def reconstruct(self) -> np.ndarray:
        return self.abundance_cube @ self.endmember_matrix.T


def nmf_objective(V, W, H) -> float:
    resid = V - W @ H
    return float(np.sum(resid * resid))


def nmf_multiplicative_step(V, W, H, eps: float = 1e-9, update_w: bool = True, update_h: bool = True):
    """One Lee-Seung update for ``V ~ W @ H``; ``H`` uses the refreshed ``W``."""
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if W.shape[0] != V.shape[0] or H.shape[1] != V.shape[1] or W.shape[1] != H.shape[0]:
        raise ShapeError(f"incompatible NMF shapes V{V.shape} W{W.shape} H{H.shape}")
    if np.any(V < 0) or np.any(W < 0) or np.any(H < 0):
        raise ValueError("NMF inputs must be nonnegative")
    if update_w:
        W = W * (V @ H.T) / (W @ (H @ H.T) + eps)
    if update_h:
        H = H * (W.T @ V) / ((W.T @ W) @ H + eps)
    return W, H


def cnmf_factorize(pair: ObservedPair, srf, psf, config: CnmfConfig = CnmfConfig(),
                   geometry: Geometry | None = None) -> Factorization:
    if geometry is None:
        geometry = Geometry(pair.ratio)
    srf = np.asarray(srf, dtype=np.float64)
    psf = as_kernel(psf, "psf")
    big_b, b = pair.hsi_bands, pair.msi_bands
    if srf.shape != (big_b, b):
        raise ShapeError(f"SRF shape {srf.shape} does not match pair bands ({big_b}, {b})")
    if geometry.ratio != pair.ratio:
        raise ShapeError(f"geometry ratio {geometry.ratio} does not match pair ratio {pair.ratio}")
    if np.any(srf < 0) or np.any(pair.hsi < 0) or np.any(pair.msi < 0):
        raise ValueError("CNMF needs nonnegative images and SRF")

    big_m, big_n, _ = pair.msi.shape
    p, eps = config.endmembers, config.epsilon
    hsi_v = pair.hsi.reshape(-1, big_b).T  # (B, m*n)
    msi_v = pair.msi.reshape(-1, b).T  # (b, M*N)

    # uniform random start, scaled so E @ A matches the mean HSI level
    rng = np.random.default_rng(config.seed)
    endmembers = rng.uniform(0.5, 1.5, (big_b, p)) * float(hsi_v.mean())
    abund = rng.uniform(0.5, 1.5, (p, big_m * big_n))
    abund /= abund.sum(axis=0, keepdims=True)

    for outer in range(config.outer_iterations):
        high_cube = abund.T.reshape(big_m, big_n, p)
        low = spatial_degrade(high_cube, psf, geometry.ratio, geometry.boundary, geometry.offset)
        low = low.reshape(-1, p).T
        for _ in range(config.inner_iterations):
            endmembers, low = nmf_multiplicative_step(hsi_v, endmembers, low, eps)
        _check("hsi", outer, endmembers, low)

        degraded = srf.T @ endmembers
        for _ in range(config.inner_iterations):
            _, abund = nmf_multiplicative_step(msi_v, degraded, abund, eps, update_w=False)
        _check("msi", outer, abund)
        log.debug("cnmf outer %d: hsi %.3e msi %.3e", outer,
                  nmf_objective(hsi_v, endmembers, low), nmf_objective(msi_v, degraded, abund))

    return Factorization(endmembers, abund.T.reshape(big_m, big_n, p))


def cnmf_fuse(pair: ObservedPair, srf, psf, config: CnmfConfig = CnmfConfig(),
              geometry: Geometry | None = None) -> np.ndarray:
    """High-resolution hyperspectral estimate ``(M, N, B)``."""
    return cnmf_factorize(pair, srf, psf, config, geometry).reconstruct()


def _check(stage: str, outer: int, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FusionDiverged(f"non-finite factor in {stage} stage at outer iteration {outer}")
