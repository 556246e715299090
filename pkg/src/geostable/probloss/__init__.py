"""
Probloss module.

Matching score, deterministic matching loss and the probabilistic
introspective loss with its closed-form normalization constant, plus the
contrastive ablation and numerical checks of all of them.
"""

from .losses import (
    DEFAULT_MARGIN,
    SIGMA_EPSILON,
    UncertaintyPair,
    batch_objective,
    log_normalizer,
    loss_surface,
    matching_loss,
    matching_score,
    nll,
    nll_sigma_derivative,
    score_matrix,
)
from .quadrature import log_normalizer_quadrature, normalization_integral
from .gradcheck import CheckResult, DEFAULT_SIGMA_GRID, run_all

__all__ = [
    "DEFAULT_MARGIN",
    "SIGMA_EPSILON",
    "UncertaintyPair",
    "batch_objective",
    "log_normalizer",
    "loss_surface",
    "matching_loss",
    "matching_score",
    "nll",
    "nll_sigma_derivative",
    "score_matrix",
    "log_normalizer_quadrature",
    "normalization_integral",
    "CheckResult",
    "DEFAULT_SIGMA_GRID",
    "run_all",
]
