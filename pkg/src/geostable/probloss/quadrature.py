"""Numerical integration of the score density, used to verify the closed forms."""

from __future__ import annotations

import math
from typing import Callable, Optional

from scipy import integrate

from geostable.correspondence.labels import NEGATIVE, POSITIVE
from geostable.probloss.losses import log_normalizer


def _quad(func: Callable[[float], float]) -> float:
    value, _ = integrate.quad(func, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return float(value)


def log_normalizer_quadrature(sigma: float) -> float:
    """``log C(sigma)`` by quadrature of ``e^{t/sigma}`` over ``[0, 1]``.

    Integrates ``e^{(t-1)/sigma}`` and adds ``1/sigma`` back so small sigmas do
    not overflow.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 1.0 / sigma + math.log(_quad(lambda t: math.exp((t - 1.0) / sigma)))


def normalization_integral(
    sigma: float,
    label: int,
    log_norm: Optional[Callable[[float], float]] = None,
) -> float:
    """Integral of ``exp((1 - l(s, y)) / sigma - log C(sigma))`` over ``s in [0, 1]``."""
    if label not in (POSITIVE, NEGATIVE):
        raise ValueError(f"label must be +1 or -1, got {label}")
    log_c = float((log_norm or log_normalizer)(sigma))

    def density(s: float) -> float:
        loss = 1.0 - s if label == POSITIVE else s
        return math.exp((1.0 - loss) / sigma - log_c)

    return _quad(density)
