"""SRF pretraining and joint estimation of (SRF, PSF)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..degradation import Geometry, ObservedPair
from .model import BandMask, DirinetParams, Objective, build_psf, build_srf
from .optim import AdamState, HyperConfig, adam_step, lr_schedule

log = logging.getLogger(__name__)

TraceEntry = Tuple[int, float, float, float]  # (iteration, l_m, l_v, l)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, trace: List[TraceEntry], reason: str):
        super().__init__(f"training diverged at iteration {iteration}: {reason}")
        self.iteration = iteration
        self.trace = trace


@dataclass
class EstimationResult:
    srf: np.ndarray
    psf: np.ndarray
    loss_trace: List[TraceEntry]
    config: HyperConfig
    geometry: Geometry
    params: DirinetParams = field(repr=False)
    pretrain_trace: List[float] = field(default_factory=list, repr=False)

    @property
    def final_data_loss(self) -> float:
        return self.loss_trace[-1][1]


def pretrain_srf(pair: ObservedPair, params: DirinetParams, config: HyperConfig, geometry: Geometry,
                 mask: Optional[BandMask] = None, trace: Optional[list] = None) -> DirinetParams:
    """Fit the SRF alone against the decimated (unblurred) MSI.

    Only ``w_raw`` moves; ``u_raw`` and ``alpha_raw`` come back untouched.
    """
    if config.pretrain_iterations == 0:
        return params
    objective = Objective(pair, geometry, 0.0, mask, blur=False)
    state = AdamState.fresh(params)
    for step in range(config.pretrain_iterations):
        terms, grads = objective.evaluate(params)
        if trace is not None:
            trace.append(terms.data)
        params, state = adam_step(params, state, grads, lr_schedule(step, config), config, ("w_raw",))
    return params


def train(pair: ObservedPair, config: HyperConfig = HyperConfig(), geometry: Optional[Geometry] = None,
          mask: Optional[BandMask] = None, init: Optional[DirinetParams] = None,
          callback: Optional[Callable[[int, DirinetParams], None]] = None) -> EstimationResult:
    """Estimate the SRF and PSF linking ``pair``.

    Runs ``config.pretrain_iterations`` SRF-only steps and then
    ``config.iterations`` joint Adam steps on ``l_m + lam * l_v``. The loss
    trace holds one entry per evaluated parameter state, including the
    initial and the final one. ``callback(iteration, params)`` is invoked
    on every parameter state of the joint phase.
    """
    if geometry is None:
        geometry = Geometry(pair.ratio)
    if init is None:
        params = DirinetParams.initial(pair.hsi_bands, pair.msi_bands, geometry.kernel_size)
    else:
        params = init.copy()

    pretrain_trace: List[float] = []
    params = pretrain_srf(pair, params, config, geometry, mask, pretrain_trace)
    if pretrain_trace:
        log.info("pretrain: %d steps, loss %.3e -> %.3e", len(pretrain_trace), pretrain_trace[0], pretrain_trace[-1])

    objective = Objective(pair, geometry, config.lam, mask)
    state = AdamState.fresh(params)
    trace: List[TraceEntry] = []
    for step in range(config.iterations + 1):
        if callback is not None:
            callback(step, params)
        try:
            terms, grads = objective.evaluate(params, with_grad=step < config.iterations)
        except FloatingPointError as exc:
            raise TrainingDiverged(step, trace, str(exc)) from exc
        trace.append((step, terms.data, terms.tv, terms.total))
        if step % 100 == 0 or step == config.iterations:
            log.debug("iter %4d  l_m %.3e  l_v %.3e  l %.3e", step, terms.data, terms.tv, terms.total)
        if step == config.iterations:
            break
        params, state = adam_step(params, state, grads, lr_schedule(step, config), config)
        if not np.isfinite(params.max_abs()):
            raise TrainingDiverged(step + 1, trace, "non-finite parameters after Adam step")

    return EstimationResult(
        srf=build_srf(params, mask),
        psf=build_psf(params, geometry.kernel_size),
        loss_trace=trace,
        config=config,
        geometry=geometry,
        params=params,
        pretrain_trace=pretrain_trace,
    )
