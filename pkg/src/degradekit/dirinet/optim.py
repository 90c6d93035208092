"""Training hyperparameters, learning-rate schedule and Adam."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Iterable

import numpy as np

from .model import PARAM_FIELDS, DirinetParams


@dataclass(frozen=True)
class HyperConfig:
    lam: float = 1e-7
    iterations: int = 500
    pretrain_iterations: int = 1000
    lr0: float = 1e-1
    decay_step: float = 250.0
    decay_rate: float = 0.99
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.iterations < 0 or self.pretrain_iterations < 0:
            raise ValueError("iteration counts must be nonnegative")
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must lie in (0, 1]")
        if self.decay_step <= 0:
            raise ValueError("decay_step must be positive")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HyperConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def lr_schedule(step: int, config: HyperConfig) -> float:
    """Continuous exponential decay: ``lr0 * decay_rate ** (step / decay_step)``."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    return config.lr0 * config.decay_rate ** (step / config.decay_step)


@dataclass
class AdamState:
    first_moment: DirinetParams
    second_moment: DirinetParams
    step_count: int = 0

    @classmethod
    def fresh(cls, params: DirinetParams) -> "AdamState":
        return cls(DirinetParams.zeros_like(params), DirinetParams.zeros_like(params), 0)


def adam_step(params: DirinetParams, state: AdamState, grads: DirinetParams, lr: float,
              config: HyperConfig, trainable: Iterable[str] = PARAM_FIELDS):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Fields not listed in ``trainable`` are copied through untouched and
    their moments are left as they were.
    """
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    step = state.step_count + 1
    new_params = params.copy()
    first = state.first_moment.copy()
    second = state.second_moment.copy()
    for name in trainable:
        g = np.asarray(getattr(grads, name), dtype=np.float64)
        m = b1 * np.asarray(getattr(first, name)) + (1.0 - b1) * g
        v = b2 * np.asarray(getattr(second, name)) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        theta = np.asarray(getattr(params, name)) - lr * m_hat / (np.sqrt(v_hat) + eps)
        if name == "alpha_raw":
            m, v, theta = float(m), float(v), float(theta)
        setattr(first, name, m)
        setattr(second, name, v)
        setattr(new_params, name, theta)
    return new_params, AdamState(first, second, step)
