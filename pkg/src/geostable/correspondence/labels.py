"""
Correspondence labels from warp geometry.

A pair (u, u') is labelled +1 when ``||u' - g(u)|| <= tau1``, 0 (ignored) when
``tau1 < ||u' - g(u)|| <= tau2`` and -1 otherwise. Distances are in input-image
pixels.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import cdist

POSITIVE = 1
IGNORED = 0
NEGATIVE = -1

DEFAULT_TAU1 = 1.0
DEFAULT_TAU2 = 30.0


def _check_taus(tau1: float, tau2: float) -> None:
    if not tau1 < tau2:
        raise ValueError(f"tau1 must be < tau2, got tau1={tau1}, tau2={tau2}")


def assign_label(
    u_target: Sequence[float],
    u_warped: Sequence[float],
    tau1: float = DEFAULT_TAU1,
    tau2: float = DEFAULT_TAU2,
) -> int:
    """Label of one pair given the target point and the warped anchor (both in pixels)."""
    _check_taus(tau1, tau2)
    distance = float(np.hypot(*(np.asarray(u_target, float) - np.asarray(u_warped, float))))
    if distance <= tau1:
        return POSITIVE
    if distance <= tau2:
        return IGNORED
    return NEGATIVE


def label_matrix(
    warped_anchors: npt.ArrayLike,
    targets: npt.ArrayLike,
    tau1: float = DEFAULT_TAU1,
    tau2: float = DEFAULT_TAU2,
) -> npt.NDArray[np.int8]:
    """``labels[i, j]`` for warped anchor i against target j; vectorised ``assign_label``."""
    _check_taus(tau1, tau2)
    distances = cdist(np.asarray(warped_anchors, float), np.asarray(targets, float))
    labels = np.full(distances.shape, NEGATIVE, dtype=np.int8)
    labels[distances <= tau2] = IGNORED
    labels[distances <= tau1] = POSITIVE
    return labels
