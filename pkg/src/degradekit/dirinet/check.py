"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..degradation import Geometry, SceneSpec, degrade_pair, synth_scene
from .model import PARAM_FIELDS, DirinetParams, Objective, build_psf, softplus


@dataclass
class GradCheckReport:
    max_error: float  # relative error, counted as 0 where |diff| <= abs_floor
    worst: str
    checked: int
    rel_tol: float
    abs_floor: float
    max_abs_diff: float = 0.0  # largest |analytic - finite difference|, floor or not

    @property
    def passed(self) -> bool:
        return self.max_error <= self.rel_tol


def random_instance(seed: int, height: int = 12, width: int = 12, bands: int = 6,
                    msi_bands: int = 3, ratio: int = 4, min_tv_gap: float = 1e-6):
    """Random consistent pair plus a perturbed parameter point.

    The pair is generated from a random scene with a random simplex kernel
    and a random positive SRF; the evaluation point perturbs the raw
    parameters that encode them. Points whose kernel has a forward
    difference smaller than ``min_tv_gap`` (a TV kink) are redrawn.
    """
    rng = np.random.default_rng(seed)
    geometry = Geometry(ratio)
    size = geometry.kernel_size
    scene = synth_scene(SceneSpec(height * ratio, width * ratio, bands, min(3, bands), seed=seed))
    true_u = rng.normal(0.0, 1.0, size * size)
    true_alpha = rng.normal(0.5, 0.5)
    kernel = build_psf(DirinetParams(np.zeros((bands, msi_bands)), true_u, true_alpha), size)
    w_true = rng.normal(-1.0, 1.0, (bands, msi_bands))
    pair = degrade_pair(scene, kernel, softplus(w_true), geometry)
    while True:
        params = DirinetParams(
            w_true + rng.normal(0.0, 0.3, w_true.shape),
            true_u + rng.normal(0.0, 0.3, true_u.shape),
            true_alpha + rng.normal(0.0, 0.3),
        )
        k = build_psf(params, size)
        gaps = np.concatenate((np.abs(np.diff(k, axis=0)).ravel(), np.abs(np.diff(k, axis=1)).ravel()))
        if gaps.min() > min_tv_gap:
            return pair, params, geometry


def check_gradients(pair, params: DirinetParams, geometry: Geometry, lam: float = 1e-7,
                    step: float = 1e-6, rel_tol: float = 1e-5, abs_floor: float = 1e-10) -> GradCheckReport:
    """Compare every analytic gradient component with a central difference."""
    objective = Objective(pair, geometry, lam)
    _, grads = objective.evaluate(params)

    def loss_at(name, index, delta):
        shifted = params.copy()
        if name == "alpha_raw":
            shifted.alpha_raw += delta
        else:
            getattr(shifted, name).reshape(-1)[index] += delta
        return objective.evaluate(shifted, with_grad=False)[0].total

    worst_err, worst_name, count, max_diff = 0.0, "", 0, 0.0
    for name in PARAM_FIELDS:
        analytic = np.atleast_1d(np.asarray(getattr(grads, name), dtype=np.float64)).ravel()
        for i, a in enumerate(analytic):
            fd = (loss_at(name, i, step) - loss_at(name, i, -step)) / (2.0 * step)
            diff = abs(fd - a)
            max_diff = max(max_diff, diff)
            err = 0.0 if diff <= abs_floor else diff / max(abs(fd), abs(a))
            count += 1
            if err > worst_err or not worst_name:
                worst_err = max(err, worst_err)
                worst_name = f"{name}[{i}]"
    return GradCheckReport(worst_err, worst_name, count, rel_tol, abs_floor, max_diff)
