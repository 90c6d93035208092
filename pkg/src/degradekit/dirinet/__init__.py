"""Joint SRF/PSF estimation with a stick-breaking kernel parameterization."""

from .model import (
    BandMask,
    DirinetParams,
    LossTerms,
    Objective,
    build_psf,
    build_srf,
    data_loss,
    gradients,
    sigmoid,
    softplus,
    stick_breaking,
    total_loss,
    tv_loss,
    tv_subgradient,
)
from .check import GradCheckReport, check_gradients, random_instance
from .optim import AdamState, HyperConfig, adam_step, lr_schedule
from .train import EstimationResult, TrainingDiverged, pretrain_srf, train

__all__ = [
    "AdamState",
    "BandMask",
    "DirinetParams",
    "EstimationResult",
    "GradCheckReport",
    "HyperConfig",
    "LossTerms",
    "Objective",
    "TrainingDiverged",
    "adam_step",
    "build_psf",
    "build_srf",
    "check_gradients",
    "data_loss",
    "gradients",
    "lr_schedule",
    "pretrain_srf",
    "random_instance",
    "sigmoid",
    "softplus",
    "stick_breaking",
    "total_loss",
    "train",
    "tv_loss",
    "tv_subgradient",
]
