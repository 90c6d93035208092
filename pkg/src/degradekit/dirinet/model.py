"""Forward maps and reverse-mode gradients of the estimation network.

Parameters are kept in unconstrained (raw) form:

* ``w_raw`` -- ``(B, b)``; the SRF is ``softplus(w_raw)``.
* ``u_raw`` -- ``(k*k,)``; ``u = sigmoid(u_raw)`` drives the stick lengths.
* ``alpha_raw`` -- scalar; ``alpha = softplus(alpha_raw)``.

The PSF is obtained as ``v = 1 - u**(1/alpha)``, stick-breaking of ``v``
and renormalization to unit sum. Sticks fill the kernel in row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..cube import ShapeError, as_kernel, downsample, pad_cube
from ..degradation import Geometry, ObservedPair

PARAM_FIELDS = ("w_raw", "u_raw", "alpha_raw")
ALPHA_ONE = float(np.log(np.e - 1.0))  # softplus(ALPHA_ONE) == 1


def softplus(x):
    """``log(1 + exp(x))`` without overflow for large ``x``."""
    x = np.asarray(x, dtype=np.float64)
    pos = np.maximum(x, 0.0)
    out = pos + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def inverse_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("softplus is strictly positive; cannot invert nonpositive values")
    out = y + np.log(-np.expm1(-y))
    return float(out) if out.ndim == 0 else out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def stick_breaking(v) -> np.ndarray:
    """Break a unit stick: ``s_i = v_i * prod_{k<i} (1 - v_k)``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if np.any(~(v > 0)) or np.any(~(v < 1)):
        raise ValueError("stick fractions must lie strictly inside (0, 1)")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - v)[:-1]))
    return v * remaining


@dataclass
class DirinetParams:
    w_raw: np.ndarray
    u_raw: np.ndarray
    alpha_raw: float

    def __post_init__(self):
        self.w_raw = np.array(self.w_raw, dtype=np.float64)
        self.u_raw = np.array(self.u_raw, dtype=np.float64).ravel()
        self.alpha_raw = float(self.alpha_raw)
        if self.w_raw.ndim != 2:
            raise ShapeError(f"w_raw must be (B, b), got shape {self.w_raw.shape}")
        for name in PARAM_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @classmethod
    def initial(cls, hsi_bands: int, msi_bands: int, kernel_size: int) -> "DirinetParams":
        """Flat SRF of ln 2, uniform kernel, ``alpha = 1``.

        ``u_raw = 0`` would start from sticks 1/2, 1/4, ..., leaving the last
        cell of an 8x8 kernel with mass 2**-64; the uniform start avoids
        spending most of the iteration budget undoing that skew.
        """
        size = int(kernel_size)
        uniform = np.full((size, size), 1.0 / (size * size))
        params = cls.encode(np.full((hsi_bands, msi_bands), np.log(2.0)), uniform, alpha=1.0)
        params.w_raw[:] = 0.0
        return params

    @classmethod
    def zeros_like(cls, other: "DirinetParams") -> "DirinetParams":
        return cls(np.zeros_like(other.w_raw), np.zeros_like(other.u_raw), 0.0)

    @classmethod
    def encode(cls, srf, kernel, alpha: float = 1.0, mass: float = 0.5) -> "DirinetParams":
        """Raw parameters that reproduce a given positive SRF and simplex kernel.

        The kernel is scaled to total stick mass ``mass`` before inverting
        the stick-breaking map, which keeps every fraction inside (0, 1).
        """
        kernel = as_kernel(kernel)
        phi = kernel.ravel() / kernel.sum()
        if np.any(phi <= 0):
            raise ValueError("kernel must be strictly positive to be encoded")
        sticks = mass * phi
        used = np.concatenate(([0.0], np.cumsum(sticks)[:-1]))
        v = sticks / (1.0 - used)
        u = (1.0 - v) ** alpha
        return cls(inverse_softplus(srf), logit(u), inverse_softplus(alpha))

    @property
    def kernel_size(self) -> int:
        size = int(round(np.sqrt(self.u_raw.size)))
        if size * size != self.u_raw.size:
            raise ShapeError(f"u_raw length {self.u_raw.size} is not a perfect square")
        return size

    def copy(self) -> "DirinetParams":
        return DirinetParams(self.w_raw.copy(), self.u_raw.copy(), self.alpha_raw)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(self.w_raw))), float(np.max(np.abs(self.u_raw))), abs(self.alpha_raw))


@dataclass
class BandMask:
    """Permitted HSI bands for each MSI band (manual band matching)."""

    supports: Sequence[Sequence[int]]

    def __post_init__(self):
        self.supports = [sorted(set(int(i) for i in s)) for s in self.supports]
        for j, s in enumerate(self.supports):
            if not s:
                raise ValueError(f"band mask support for MSI band {j} is empty")

    @classmethod
    def from_ranges(cls, ranges) -> "BandMask":
        """Inclusive ``(start, end)`` HSI band ranges, one per MSI band."""
        return cls([range(int(a), int(b) + 1) for a, b in ranges])

    def matrix(self, hsi_bands: int, msi_bands: int) -> np.ndarray:
        if len(self.supports) != msi_bands:
            raise ShapeError(f"band mask has {len(self.supports)} rows, expected {msi_bands}")
        out = np.zeros((hsi_bands, msi_bands), dtype=bool)
        for j, support in enumerate(self.supports):
            if support[0] < 0 or support[-1] >= hsi_bands:
                raise ValueError(f"band mask row {j} refers to bands outside [0, {hsi_bands})")
            out[support, j] = True
        return out


def _psf_forward(u_raw: np.ndarray, alpha_raw: float) -> dict:
    u = sigmoid(u_raw)
    log_u = -softplus(-u_raw)
    alpha = softplus(alpha_raw)
    q = np.exp(log_u / alpha)  # u ** (1 / alpha), i.e. 1 - v
    v = -np.expm1(log_u / alpha)
    remaining = np.concatenate(([1.0], np.cumprod(q)[:-1]))
    sticks = v * remaining
    total = sticks.sum()
    return {
        "u": u,
        "log_u": log_u,
        "alpha": alpha,
        "q": q,
        "v": v,
        "remaining": remaining,
        "sticks": sticks,
        "total": total,
        "phi": sticks / total,
    }


def _psf_backward(cache: dict, grad_phi: np.ndarray, alpha_raw: float):
    phi, total = cache["phi"], cache["total"]
    v, q, remaining = cache["v"], cache["q"], cache["remaining"]
    grad_sticks = (grad_phi - np.dot(grad_phi, phi)) / total

    n = v.size
    grad_v = np.empty(n)
    carry = 0.0  # gradient w.r.t. the remaining length after stick i
    gs, vl, ql, rl = grad_sticks.tolist(), v.tolist(), q.tolist(), remaining.tolist()
    for i in range(n - 1, -1, -1):
        grad_v[i] = (gs[i] - carry) * rl[i]
        carry = gs[i] * vl[i] + carry * ql[i]

    alpha = cache["alpha"]
    grad_u_raw = -grad_v * q * (1.0 - cache["u"]) / alpha
    grad_alpha = float(np.dot(grad_v, q * cache["log_u"])) / (alpha * alpha)
    return grad_u_raw, grad_alpha * sigmoid(alpha_raw)


def build_psf(params: DirinetParams, size: Optional[int] = None) -> np.ndarray:
    """Kernel on the open simplex, reshaped row-major to ``(size, size)``."""
    if size is None:
        size = params.kernel_size
    if params.u_raw.size != size * size:
        raise ShapeError(f"u_raw has {params.u_raw.size} entries, kernel of size {size} needs {size * size}")
    return _psf_forward(params.u_raw, params.alpha_raw)["phi"].reshape(size, size)


def build_srf(params: DirinetParams, mask: Optional[BandMask] = None) -> np.ndarray:
    srf = softplus(params.w_raw)
    if mask is not None:
        srf = np.where(mask.matrix(*srf.shape), srf, 0.0)
    return srf


def tv_loss(kernel) -> float:
    """Anisotropic total variation: L1 norm of forward differences inside the grid.

    The sum is exactly rounded, so the value does not depend on summation order.
    """
    kernel = as_kernel(kernel)
    diffs = np.concatenate((np.diff(kernel, axis=1).ravel(), np.diff(kernel, axis=0).ravel()))
    return math.fsum(np.abs(diffs))


def tv_subgradient(kernel) -> np.ndarray:
    """Subgradient of :func:`tv_loss`, taking ``sign(0) = 0``."""
    kernel = as_kernel(kernel)
    grad = np.zeros_like(kernel)
    sx = np.sign(np.diff(kernel, axis=1))
    grad[:, 1:] += sx
    grad[:, :-1] -= sx
    sy = np.sign(np.diff(kernel, axis=0))
    grad[1:, :] += sy
    grad[:-1, :] -= sy
    return grad


class DecimatedBlur:
    """Blur-then-decimate of a fixed MSI, evaluated only where samples are kept.

    Holds the ``k*k`` shifted, strided views of the padded MSI so both the
    forward map and its adjoint with respect to the kernel are a single
    tensor contraction.
    """

    def __init__(self, msi: np.ndarray, geometry: Geometry):
        size, ratio, offset = geometry.kernel_size, geometry.ratio, geometry.offset
        height, width, bands = msi.shape
        if size > min(height, width):
            raise ShapeError(f"kernel of size {size} exceeds image of size {height}x{width}")
        if height % ratio or width % ratio:
            raise ShapeError(f"image size {height}x{width} is not divisible by ratio {ratio}")
        m, n = height // ratio, width // ratio
        padded = pad_cube(msi, size, geometry.boundary)
        patches = np.empty((size * size, m, n, bands))
        for a in range(size):
            for c in range(size):
                rows = slice(offset + a, offset + a + ratio * m, ratio)
                cols = slice(offset + c, offset + c + ratio * n, ratio)
                patches[a * size + c] = padded[rows, cols, :]
        self.patches = patches
        self.size = size

    def forward(self, kernel: np.ndarray) -> np.ndarray:
        return np.tensordot(kernel.ravel(), self.patches, axes=1)

    def kernel_adjoint(self, grad_out: np.ndarray) -> np.ndarray:
        return np.tensordot(self.patches, grad_out, axes=([1, 2, 3], [0, 1, 2])).reshape(self.size, self.size)


@dataclass
class LossTerms:
    data: float
    tv: float
    total: float


@dataclass
class Objective:
    """Loss of a fixed observed pair as a function of the raw parameters.

    Precomputes everything that does not depend on the parameters; build
    once per pair and call :meth:`evaluate` each iteration.
    """

    pair: ObservedPair
    geometry: Geometry
    lam: float = 1e-7
    mask: Optional[BandMask] = None
    blur: bool = True
    _hsi_flat: np.ndarray = field(init=False, repr=False)
    _blur: Optional[DecimatedBlur] = field(init=False, repr=False)
    _msi_decimated: Optional[np.ndarray] = field(init=False, repr=False)
    _mask: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        if self.geometry.ratio != self.pair.ratio:
            raise ShapeError(f"geometry ratio {self.geometry.ratio} does not match pair ratio {self.pair.ratio}")
        self._hsi_flat = self.pair.hsi.reshape(-1, self.pair.hsi_bands)
        if self.blur:
            self._blur = DecimatedBlur(self.pair.msi, self.geometry)
            self._msi_decimated = None
        else:
            self._blur = None
            self._msi_decimated = downsample(self.pair.msi, self.geometry.ratio, self.geometry.offset)
        self._mask = None if self.mask is None else self.mask.matrix(self.pair.hsi_bands, self.pair.msi_bands)

    def _check_params(self, params: DirinetParams):
        expected = (self.pair.hsi_bands, self.pair.msi_bands)
        if params.w_raw.shape != expected:
            raise ShapeError(f"w_raw has shape {params.w_raw.shape}, expected {expected}")
        if self.blur and params.u_raw.size != self.geometry.kernel_size ** 2:
            raise ShapeError(f"u_raw has {params.u_raw.size} entries, expected {self.geometry.kernel_size ** 2}")

    def degradations(self, params: DirinetParams):
        """Return ``(X_d, Y_d, srf, kernel)`` for the current parameters."""
        self._check_params(params)
        srf = build_srf(params)
        if self._mask is not None:
            srf = np.where(self._mask, srf, 0.0)
        hsi_d = (self._hsi_flat @ srf).reshape(self.pair.hsi.shape[:2] + (srf.shape[1],))
        if self.blur:
            kernel = build_psf(params, self.geometry.kernel_size)
            msi_d = self._blur.forward(kernel)
        else:
            kernel = None
            msi_d = self._msi_decimated
        return hsi_d, msi_d, srf, kernel

    def evaluate(self, params: DirinetParams, with_grad: bool = True):
        """Loss terms and, optionally, the gradient with respect to every raw parameter."""
        self._check_params(params)
        srf = build_srf(params)
        if self._mask is not None:
            srf = np.where(self._mask, srf, 0.0)
        hsi_d = (self._hsi_flat @ srf).reshape(self.pair.hsi.shape[:2] + (srf.shape[1],))
        _finite("spectral_degradation", hsi_d)

        cache = None
        if self.blur:
            cache = _psf_forward(params.u_raw, params.alpha_raw)
            _finite("psf", cache["phi"])
            kernel = cache["phi"].reshape(self.geometry.kernel_size, self.geometry.kernel_size)
            msi_d = self._blur.forward(kernel)
            _finite("spatial_degradation", msi_d)
            tv = tv_loss(kernel)
        else:
            kernel = None
            msi_d = self._msi_decimated
            tv = 0.0

        resid = hsi_d - msi_d
        data = float(np.mean(resid * resid))
        total = data + self.lam * tv
        _finite("loss", np.array([data, total]))
        terms = LossTerms(data, tv, total)
        if not with_grad:
            return terms, None

        grad_resid = (2.0 / resid.size) * resid
        grad_srf = self._hsi_flat.T @ grad_resid.reshape(-1, srf.shape[1])
        if self._mask is not None:
            grad_srf = np.where(self._mask, grad_srf, 0.0)
        grad_w = grad_srf * sigmoid(params.w_raw)
        _finite("grad_w_raw", grad_w)

        if self.blur:
            grad_kernel = -self._blur.kernel_adjoint(grad_resid)
            if self.lam:
                grad_kernel = grad_kernel + self.lam * tv_subgradient(kernel)
            grad_u, grad_alpha = _psf_backward(cache, grad_kernel.ravel(), params.alpha_raw)
            _finite("grad_u_raw", grad_u)
            _finite("grad_alpha_raw", np.array(grad_alpha))
        else:
            grad_u, grad_alpha = np.zeros_like(params.u_raw), 0.0
        return terms, DirinetParams(grad_w, grad_u, grad_alpha)


def _finite(node: str, value: np.ndarray):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value at graph node '{node}'")


def data_loss(pair: ObservedPair, params: DirinetParams, geometry: Geometry, mask: Optional[BandMask] = None):
    """Return ``(l_m, X_d, Y_d)``: mean squared mismatch of the two degradation paths."""
    hsi_d, msi_d, _, _ = Objective(pair, geometry, 0.0, mask).degradations(params)
    resid = hsi_d - msi_d
    return float(np.mean(resid * resid)), hsi_d, msi_d


def total_loss(pair: ObservedPair, params: DirinetParams, lam: float, geometry: Geometry,
               mask: Optional[BandMask] = None) -> float:
    terms, _ = Objective(pair, geometry, lam, mask).evaluate(params, with_grad=False)
    return terms.total


def gradients(pair: ObservedPair, params: DirinetParams, lam: float, geometry: Geometry,
              mask: Optional[BandMask] = None) -> DirinetParams:
    _, grads = Objective(pair, geometry, lam, mask).evaluate(params)
    return grads
