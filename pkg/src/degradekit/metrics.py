"""Full-reference quality metrics for hyperspectral cubes.

Conventions: PSNR peak defaults to the maximum of the reference over the
whole cube; SSIM uses a 7x7 uniform window over valid positions only with
population statistics; SAM is reported in degrees; SID adds ``epsilon`` to
every entry before normalizing each spectrum.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cube import ShapeError, as_cube

SSIM_WINDOW = 7


def _pair(reference, test):
    reference = as_cube(reference, "reference")
    test = as_cube(test, "test")
    if reference.shape != test.shape:
        raise ShapeError(f"shape mismatch: reference {reference.shape} vs test {test.shape}")
    return reference, test


def _peak(reference: np.ndarray, peak: Optional[float]) -> float:
    if peak is None:
        peak = float(reference.max())
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    return peak


def psnr(reference, test, peak: Optional[float] = None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    reference, test = _pair(reference, test)
    peak = _peak(reference, peak)
    diff = reference - test
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr_per_band(reference, test, peak: Optional[float] = None) -> List[float]:
    reference, test = _pair(reference, test)
    peak = _peak(reference, peak)
    mse = np.mean((reference - test) ** 2, axis=(0, 1))
    return [math.inf if m == 0 else 10.0 * math.log10(peak * peak / m) for m in mse]


def ssim_band(reference: np.ndarray, test: np.ndarray, peak: float) -> float:
    if min(reference.shape) < SSIM_WINDOW:
        raise ShapeError(f"band of size {reference.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    win = (SSIM_WINDOW, SSIM_WINDOW)
    x = sliding_window_view(reference, win)
    y = sliding_window_view(test, win)
    mx = x.mean(axis=(-2, -1))
    my = y.mean(axis=(-2, -1))
    vx = (x * x).mean(axis=(-2, -1)) - mx * mx
    vy = (y * y).mean(axis=(-2, -1)) - my * my
    cxy = (x * y).mean(axis=(-2, -1)) - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(reference, test, peak: Optional[float] = None) -> float:
    """Mean structural similarity, averaged over bands."""
    reference, test = _pair(reference, test)
    peak = _peak(reference, peak)
    return float(np.mean([ssim_band(reference[:, :, k], test[:, :, k], peak) for k in range(reference.shape[2])]))


def ergas(reference, test, scale_ratio: float = 1.0) -> float:
    """``100 * scale_ratio * sqrt(mean_k(RMSE_k^2 / mu_k^2))``.

    Use ``scale_ratio = 1`` for same-resolution comparisons and ``1 / r``
    when comparing a fused image against its source resolution ratio.
    """
    reference, test = _pair(reference, test)
    if not scale_ratio > 0:
        raise ValueError("scale_ratio must be positive")
    mu = reference.mean(axis=(0, 1))
    zero = np.flatnonzero(mu == 0)
    if zero.size:
        raise ValueError(f"reference band {int(zero[0])} has zero mean; ERGAS is undefined")
    mse = np.mean((reference - test) ** 2, axis=(0, 1))
    return float(100.0 * scale_ratio * np.sqrt(np.mean(mse / (mu * mu))))


def _angles(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # angle between rows of unit vectors; accurate near 0 and pi unlike arccos
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=1), np.linalg.norm(u + v, axis=1))


def sam(reference, test, return_skipped: bool = False):
    """Mean spectral angle in degrees, skipping pixels where either spectrum is zero."""
    reference, test = _pair(reference, test)
    x = reference.reshape(-1, reference.shape[2])
    y = test.reshape(-1, test.shape[2])
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    valid = (nx > 0) & (ny > 0)
    if not np.any(valid):
        raise ValueError("every pixel has a zero-norm spectrum; SAM is undefined")
    angle = float(np.degrees(np.mean(_angles(x[valid] / nx[valid, None], y[valid] / ny[valid, None]))))
    if return_skipped:
        return angle, int(np.count_nonzero(~valid))
    return angle


def sid(reference, test, epsilon: float = 1e-12) -> float:
    """Mean symmetric KL divergence between per-pixel normalized spectra."""
    reference, test = _pair(reference, test)
    if np.any(reference < 0) or np.any(test < 0):
        raise ValueError("SID requires nonnegative spectra")
    p = reference.reshape(-1, reference.shape[2]) + epsilon
    q = test.reshape(-1, test.shape[2]) + epsilon
    p = p / p.sum(axis=1, keepdims=True)
    q = q / q.sum(axis=1, keepdims=True)
    log_ratio = np.log(p) - np.log(q)
    return float(np.mean(np.sum((p - q) * log_ratio, axis=1)))


def vector_metrics(a, b):
    """RMSE and spectral angle (degrees) between two flattened kernels or SRF columns."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("vector_metrics needs nonzero vectors")
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    return rmse, math.degrees(float(_angles(a[None] / na, b[None] / nb)[0]))


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    ergas: float
    sam: float
    sid: float
    psnr_per_band: List[float] = field(default_factory=list)
    rmse_per_band: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        rows = [("PSNR (dB)", self.psnr), ("SSIM", self.ssim), ("ERGAS", self.ergas),
                ("SAM (deg)", self.sam), ("SID", self.sid)]
        return "\n".join(f"{name:<10} {value:>14.6f}" for name, value in rows)


def evaluate(reference, test, peak: Optional[float] = None, scale_ratio: float = 1.0) -> MetricReport:
    reference, test = _pair(reference, test)
    rmse = np.sqrt(np.mean((reference - test) ** 2, axis=(0, 1)))
    return MetricReport(
        psnr=psnr(reference, test, peak),
        ssim=ssim(reference, test, peak),
        ergas=ergas(reference, test, scale_ratio),
        sam=sam(reference, test),
        sid=sid(reference, test),
        psnr_per_band=psnr_per_band(reference, test, peak),
        rmse_per_band=[float(v) for v in rmse],
    )
