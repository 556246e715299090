"""
Matching scores and losses.

The score of two unit descriptors is their rectified inner product ``s in [0, 1]``.
The deterministic loss is ``l(s, +1) = 1 - s`` and ``l(s, -1) = s``. The
probabilistic loss conditions the score density on the mean inverse confidence
``sigma`` of the two pixels::

    p(s | sigma) = exp((1 - l(s, y)) / sigma) / C(sigma),   C(sigma) = sigma (e^{1/sigma} - 1)

and minimizes ``-log p``. Every function here works on python floats and on
torch tensors; tensors keep their autograd graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union, overload

import numpy as np
import numpy.typing as npt
import torch

from geostable.config import LOSS_VARIANTS
from geostable.correspondence.batch import PixelPairBatch
from geostable.correspondence.labels import NEGATIVE, POSITIVE
from geostable.exceptions import DegenerateBatchError

SIGMA_EPSILON = 1e-4
UNIT_NORM_TOLERANCE = 1e-5
DEFAULT_MARGIN = 0.5

Scalar = Union[float, torch.Tensor]
LogNormalizer = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class UncertaintyPair:
    """Inverse confidences of the two pixels of a pair."""
    sigma_u: float
    sigma_v: float

    def __post_init__(self) -> None:
        if min(self.sigma_u, self.sigma_v) < SIGMA_EPSILON:
            raise ValueError(f"sigma values must be >= {SIGMA_EPSILON}: {self}")

    @property
    def sigma_mean(self) -> float:
        return 0.5 * (self.sigma_u + self.sigma_v)


def _tensor(value: Scalar) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(value, dtype=torch.float64)


def _out(value: torch.Tensor, like: Scalar) -> Scalar:
    return value if isinstance(like, torch.Tensor) else float(value)


def _sigma_mean(sigma: Union[Scalar, UncertaintyPair]) -> Scalar:
    return sigma.sigma_mean if isinstance(sigma, UncertaintyPair) else sigma


def matching_score(
    desc_a: npt.ArrayLike,
    desc_b: npt.ArrayLike,
    check: bool = True,
) -> float:
    """Rectified inner product of two unit descriptors.

    Raises:
        ValueError: If ``check`` and either input is not unit-norm within 1e-5
    """
    a = np.asarray(desc_a, dtype=np.float64).ravel()
    b = np.asarray(desc_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"descriptor shapes differ: {a.shape} vs {b.shape}")
    if check:
        for name, vec in (("desc_a", a), ("desc_b", b)):
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
                raise ValueError(f"{name} is not unit-norm (|v| = {norm:.8f})")
    return float(min(1.0, max(0.0, float(a @ b))))


def score_matrix(desc_a: torch.Tensor, desc_b: torch.Tensor) -> torch.Tensor:
    """``(n, m)`` rectified inner products of ``(n, C)`` and ``(m, C)`` unit descriptors."""
    return torch.relu(desc_a @ desc_b.transpose(-1, -2))


@overload
def matching_loss(score: float, label: int) -> float: ...
@overload
def matching_loss(score: torch.Tensor, label: Union[int, torch.Tensor]) -> torch.Tensor: ...


def matching_loss(score, label):  # type: ignore[no-untyped-def]
    """``1 - s`` for positives, ``s`` for negatives, 0 for ignored pairs."""
    s = _tensor(score)
    y = torch.as_tensor(label, device=s.device)
    value = torch.where(y == POSITIVE, 1.0 - s, torch.where(y == NEGATIVE, s, torch.zeros_like(s)))
    return _out(value, score)


def log_normalizer(sigma: Scalar) -> Scalar:
    """``log C(sigma) = 1/sigma + log sigma + log(1 - e^{-1/sigma})``.

    Raises:
        ValueError: If any sigma is below the lower bound 1e-4
    """
    s = _tensor(sigma)
    if bool((s < SIGMA_EPSILON * (1.0 - 1e-6)).any()):
        raise ValueError(f"sigma must be >= {SIGMA_EPSILON}, got min {float(s.min()):g}")
    inv = 1.0 / s
    return _out(inv + torch.log(s) + torch.log(-torch.expm1(-inv)), sigma)


def nll(
    score: Scalar,
    label: Union[int, torch.Tensor],
    sigma: Union[Scalar, UncertaintyPair],
    log_norm: Optional[LogNormalizer] = None,
) -> Scalar:
    """Negative log-likelihood ``(l(s, y) - 1) / sigma + log C(sigma)``.

    ``sigma`` is either the pair mean or an ``UncertaintyPair``. With the default
    normalizer the ``1 / sigma`` terms cancel analytically, leaving
    ``l / sigma + log sigma + log(1 - e^{-1/sigma})``.

    Raises:
        ValueError: If a label is 0
    """
    if not isinstance(label, torch.Tensor) and label not in (POSITIVE, NEGATIVE):
        raise ValueError(f"nll is defined for labels +1 and -1, got {label}")
    sbar = _tensor(_sigma_mean(sigma))
    loss = _tensor(matching_loss(_tensor(score), label))
    value = _nll_terms(loss, sbar, log_norm)
    return _out(value, score if isinstance(score, torch.Tensor) else _sigma_mean(sigma))


def _nll_terms(
    loss: torch.Tensor,
    sbar: torch.Tensor,
    log_norm: Optional[LogNormalizer],
) -> torch.Tensor:
    if log_norm is not None:
        return (loss - 1.0) / sbar + log_norm(sbar)
    log_normalizer(sbar)  # bound check
    return loss / sbar + torch.log(sbar) + torch.log(-torch.expm1(-1.0 / sbar))


def nll_sigma_derivative(score: float, label: int, sigma: float) -> float:
    """Closed-form ``d nll / d sigma`` at the pair mean ``sigma``."""
    loss = float(matching_loss(float(score), label))
    inv = 1.0 / sigma
    return -loss * inv**2 + inv - inv**2 / math.expm1(inv)


def batch_objective(
    batch: PixelPairBatch,
    inner_products: torch.Tensor,
    sigma_a: Optional[torch.Tensor] = None,
    sigma_b: Optional[torch.Tensor] = None,
    variant: str = "probabilistic",
    margin: float = DEFAULT_MARGIN,
    log_norm: Optional[LogNormalizer] = None,
) -> torch.Tensor:
    """Weighted sum of per-pair losses over the selected pairs.

    Args:
        batch: Pair batch with labels, selection and weights
        inner_products: ``(n, n)`` raw inner products of anchor and target descriptors
        sigma_a: ``(n,)`` anchor inverse confidences (probabilistic variant)
        sigma_b: ``(n,)`` target inverse confidences (probabilistic variant)
        variant: ``probabilistic``, ``plain`` or ``contrastive``
        margin: Hinge margin of the contrastive variant
        log_norm: Replacement log-normalizer of the probabilistic density

    Returns:
        Scalar tensor

    Raises:
        ValueError: On an unknown variant or missing sigmas
        DegenerateBatchError: If no pair is selected
    """
    if variant not in LOSS_VARIANTS:
        valid = ", ".join(LOSS_VARIANTS)
        raise ValueError(f"Unknown loss variant '{variant}'; valid values: {valid}")
    if inner_products.shape != batch.labels.shape:
        raise ValueError(
            f"inner products {tuple(inner_products.shape)} != labels {batch.labels.shape}"
        )
    selected = batch.selected & (batch.labels != 0)
    if not selected.any():
        raise DegenerateBatchError("No pair is selected")

    device, dtype = inner_products.device, inner_products.dtype
    labels = torch.as_tensor(batch.labels.astype(np.int64), device=device)
    weights = torch.as_tensor(np.where(selected, batch.weights, 0.0), dtype=dtype, device=device)

    if variant == "contrastive":
        squared = (2.0 - 2.0 * inner_products).clamp_min(0.0)
        distance = squared.clamp_min(1e-12).sqrt()
        hinge = torch.relu(margin - distance) ** 2
        per_pair = torch.where(labels == POSITIVE, squared, hinge)
    else:
        scores = torch.relu(inner_products)
        per_pair = matching_loss(scores, labels)
        if variant == "probabilistic":
            if sigma_a is None or sigma_b is None:
                raise ValueError("probabilistic variant needs sigma_a and sigma_b")
            sbar = 0.5 * (sigma_a[:, None] + sigma_b[None, :])
            per_pair = _nll_terms(per_pair, sbar, log_norm)

    return (weights * per_pair).sum()


def loss_surface(
    scores: npt.ArrayLike,
    sigmas: npt.ArrayLike,
    label: int = POSITIVE,
) -> npt.NDArray[np.float64]:
    """``nll`` on the grid ``sigmas x scores``; shape ``(len(sigmas), len(scores))``."""
    s = torch.as_tensor(np.asarray(scores, dtype=np.float64))
    sig = torch.as_tensor(np.asarray(sigmas, dtype=np.float64))
    grid = nll(s[None, :].expand(len(sig), -1), label, sig[:, None])
    return grid.numpy()  # type: ignore[union-attr]
