"""
Numerical checks of the loss implementation.

Each check returns ``CheckResult`` records; ``run_all`` bundles every suite for
the ``gradcheck`` command. ``log_offset`` shifts the log-normalizer by a
constant so the suites can be seen to fail.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from geostable.correspondence.batch import PixelPairBatch, balanced_weights
from geostable.correspondence.frames import FrameSpec
from geostable.correspondence.labels import NEGATIVE, POSITIVE
from geostable.config import LOSS_VARIANTS
from geostable.probloss.losses import (
    SIGMA_EPSILON,
    batch_objective,
    log_normalizer,
    nll,
    nll_sigma_derivative,
)
from geostable.probloss.quadrature import log_normalizer_quadrature, normalization_integral

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_GRID = (0.05, 0.1, 0.5, 1.0, 5.0, 50.0)
FD_STEP = 1e-4
GRAD_RTOL = 1e-4
NORMALIZATION_TOL = 1e-6
CLOSED_FORM_TOL = 1e-8
DERIVATIVE_TOL = 1e-6

# d nll / d sigma at sigma = 1 for y = +1: 1 - 1/(e - 1) and -1/(e - 1).
EXPECTED_SIGMA_SLOPES = {1.0: 1.0 - 1.0 / (math.e - 1.0), 0.0: -1.0 / (math.e - 1.0)}


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one numerical check."""
    name: str
    passed: bool
    error: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return asdict(self)


def offset_log_normalizer(offset: float) -> Optional[Callable[[Any], Any]]:
    """Log-normalizer shifted by ``offset``; ``None`` (the exact one) when the offset is 0."""
    if offset == 0.0:
        return None
    return lambda sigma: log_normalizer(sigma) + offset


def check_normalization(
    sigmas: Sequence[float] = DEFAULT_SIGMA_GRID,
    log_offset: float = 0.0,
) -> List[CheckResult]:
    """The score density integrates to one for both labels."""
    log_norm = offset_log_normalizer(log_offset)
    results = []
    for sigma in sigmas:
        for label in (POSITIVE, NEGATIVE):
            total = normalization_integral(sigma, label, log_norm)
            err = abs(total - 1.0)
            results.append(CheckResult(
                name=f"normalization[sigma={sigma:g},y={label:+d}]",
                passed=err < NORMALIZATION_TOL,
                error=err,
                tolerance=NORMALIZATION_TOL,
                detail=f"integral={total:.12f}",
            ))
    return results


def check_closed_form(
    sigmas: Sequence[float] = DEFAULT_SIGMA_GRID,
    log_offset: float = 0.0,
) -> List[CheckResult]:
    """The closed-form log-normalizer matches quadrature."""
    results = []
    for sigma in sigmas:
        closed = float(log_normalizer(sigma)) + log_offset
        numeric = log_normalizer_quadrature(sigma)
        err = abs(closed - numeric)
        results.append(CheckResult(
            name=f"closed_form[sigma={sigma:g}]",
            passed=err < CLOSED_FORM_TOL,
            error=err,
            tolerance=CLOSED_FORM_TOL,
            detail=f"closed={closed:.12f} quadrature={numeric:.12f}",
        ))
    return results


def check_introspection() -> List[CheckResult]:
    """Slope of the loss in sigma at sigma = 1: positive for a hit, negative for a miss."""
    results = []
    for score, expected in EXPECTED_SIGMA_SLOPES.items():
        analytic = nll_sigma_derivative(score, POSITIVE, 1.0)
        numeric = (
            float(nll(score, POSITIVE, 1.0 + FD_STEP)) - float(nll(score, POSITIVE, 1.0 - FD_STEP))
        ) / (2 * FD_STEP)
        err = max(abs(analytic - numeric), abs(analytic - expected))
        results.append(CheckResult(
            name=f"introspection[s={score:g}]",
            passed=err < DERIVATIVE_TOL,
            error=err,
            tolerance=DERIVATIVE_TOL,
            detail=f"analytic={analytic:+.6f} finite_difference={numeric:+.6f}",
        ))
    return results


def random_batch(rng: np.random.Generator, n: int = 5) -> PixelPairBatch:
    """Small batch with random labels, a positive diagonal and at least one negative per row."""
    kinds = np.array([NEGATIVE, 0, POSITIVE], dtype=np.int8)
    labels = rng.choice(kinds, size=(n, n), p=[0.6, 0.2, 0.2])
    np.fill_diagonal(labels, POSITIVE)
    labels[np.arange(n), (np.arange(n) + 1) % n] = NEGATIVE
    selected = labels != 0
    points = np.zeros((n, 2))
    return PixelPairBatch(
        anchor_cells=np.zeros((n, 2), dtype=np.int64),
        anchors=points,
        targets=points.copy(),
        labels=labels,
        weights=balanced_weights(labels, selected),
        selected=selected,
        frame_a=FrameSpec(n, n),
        frame_b=FrameSpec(n, n),
    )


def _away_from_kinks(inner: torch.Tensor, margin: float) -> bool:
    distance = torch.sqrt((2.0 - 2.0 * inner).clamp_min(0.0))
    return bool(
        (inner.abs() > 0.05).all()
        and ((distance - margin).abs() > 0.05).all()
        and (distance > 0.05).all()
    )


def _random_inputs(rng: np.random.Generator, n: int, dim: int, margin: float) -> List[torch.Tensor]:
    for _ in range(1000):
        raw_a = torch.as_tensor(rng.normal(size=(n, dim)))
        raw_b = torch.as_tensor(rng.normal(size=(n, dim)))
        inner = F.normalize(raw_a, dim=1) @ F.normalize(raw_b, dim=1).T
        if _away_from_kinks(inner, margin):
            conf_a = torch.as_tensor(rng.normal(size=n))
            conf_b = torch.as_tensor(rng.normal(size=n))
            return [t.requires_grad_(True) for t in (raw_a, raw_b, conf_a, conf_b)]
    raise RuntimeError("Could not draw descriptors away from the loss kinks")


def objective_function(
    batch: PixelPairBatch,
    variant: str,
    margin: float = 0.5,
) -> Callable[..., torch.Tensor]:
    """Objective as a function of raw descriptors and raw confidence channels."""

    def objective(
        raw_a: torch.Tensor,
        raw_b: torch.Tensor,
        conf_a: torch.Tensor,
        conf_b: torch.Tensor,
    ) -> torch.Tensor:
        inner = F.normalize(raw_a, dim=1) @ F.normalize(raw_b, dim=1).T
        sigma_a = F.softplus(conf_a) + SIGMA_EPSILON
        sigma_b = F.softplus(conf_b) + SIGMA_EPSILON
        return batch_objective(batch, inner, sigma_a, sigma_b, variant, margin)

    return objective


def _max_relative_error(fn: Callable[..., torch.Tensor], inputs: List[torch.Tensor]) -> float:
    grads = torch.autograd.grad(fn(*inputs), inputs, allow_unused=True)
    # confidence channels do not enter the plain and contrastive objectives
    analytic = [torch.zeros_like(t) if g is None else g for t, g in zip(inputs, grads)]
    worst = 0.0
    with torch.no_grad():
        for tensor, grad in zip(inputs, analytic):
            flat = tensor.view(-1)
            for idx in range(flat.numel()):
                original = float(flat[idx])
                flat[idx] = original + FD_STEP
                upper = float(fn(*inputs))
                flat[idx] = original - FD_STEP
                lower = float(fn(*inputs))
                flat[idx] = original
                numeric = (upper - lower) / (2 * FD_STEP)
                exact = float(grad.view(-1)[idx])
                worst = max(worst, abs(exact - numeric) / max(1.0, abs(exact), abs(numeric)))
    return worst


def check_objective_gradients(
    batches: int = 20,
    seed: int = 0,
    n: int = 5,
    dim: int = 4,
    variants: Sequence[str] = LOSS_VARIANTS,
) -> List[CheckResult]:
    """Autograd gradients of every loss variant against central differences in float64."""
    rng = np.random.default_rng(seed)
    results = []
    for variant in variants:
        for index in range(batches):
            batch = random_batch(rng, n)
            inputs = _random_inputs(rng, n, dim, margin=0.5)
            fn = objective_function(batch, variant)
            passed = torch.autograd.gradcheck(
                fn, tuple(inputs), eps=FD_STEP, atol=1e-6, rtol=GRAD_RTOL, raise_exception=False
            )
            err = _max_relative_error(fn, inputs)
            results.append(CheckResult(
                name=f"gradient[{variant},batch={index}]",
                passed=bool(passed) and err < GRAD_RTOL,
                error=err,
                tolerance=GRAD_RTOL,
            ))
    return results


def check_variant_equivalence(
    batches: int = 8, seed: int = 0, sigma: float = 0.7
) -> List[CheckResult]:
    """With a constant sigma, the probabilistic objective is affine in the plain one."""
    rng = np.random.default_rng(seed)
    plain, prob = [], []
    for _ in range(batches):
        batch = random_batch(rng, 6)
        raw_a, raw_b, _, _ = _random_inputs(rng, 6, 4, margin=0.5)
        inner = (F.normalize(raw_a, dim=1) @ F.normalize(raw_b, dim=1).T).detach()
        const = torch.full((6,), sigma, dtype=torch.float64)
        plain.append(float(batch_objective(batch, inner, variant="plain")))
        prob.append(float(batch_objective(batch, inner, const, const, variant="probabilistic")))
    design = np.column_stack([plain, np.ones(batches)])
    coef, *_ = np.linalg.lstsq(design, np.asarray(prob), rcond=None)
    residual = float(np.max(np.abs(design @ coef - np.asarray(prob))))
    tol = 1e-9
    return [CheckResult(
        name=f"variant_equivalence[sigma={sigma:g}]",
        passed=bool(residual < tol and coef[0] > 0),
        error=residual,
        tolerance=tol,
        detail=f"scale={coef[0]:.6f} offset={coef[1]:.6f}",
    )]


def run_all(
    sigmas: Sequence[float] = DEFAULT_SIGMA_GRID,
    batches: int = 20,
    seed: int = 0,
    log_offset: float = 0.0,
) -> List[CheckResult]:
    """Every suite; results in a fixed order."""
    results = (
        check_normalization(sigmas, log_offset)
        + check_closed_form(sigmas, log_offset)
        + check_introspection()
        + check_objective_gradients(batches, seed)
        + check_variant_equivalence(seed=seed)
    )
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning("%d of %d checks failed: %s", len(failed), len(results), ", ".join(failed))
    else:
        logger.info("All %d checks passed", len(results))
    return results
