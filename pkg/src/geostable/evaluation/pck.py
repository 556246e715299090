"""
Percentage of correct keypoints.

A transferred keypoint is correct at level ``alpha`` when it lies within
``alpha * max(w, h)`` pixels of the truth, ``(w, h)`` being the object box in
the target image. The threshold is inclusive.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np
import numpy.typing as npt

from geostable.geometry.keypoints import KeypointSet

# Pixel slack on the inclusive threshold, absorbing rounding in point differences.
THRESHOLD_SLACK = 1e-9


def alpha_grid(alpha_max: float = 0.3, steps: int = 31) -> npt.NDArray[np.float64]:
    """Evenly spaced ``alpha`` values on ``[0, alpha_max]``."""
    if steps < 2 or alpha_max <= 0:
        raise ValueError(f"Need steps >= 2 and alpha_max > 0, got {steps}, {alpha_max}")
    return np.linspace(0.0, alpha_max, steps)


def _visible_predictions(predicted: npt.ArrayLike, truth: KeypointSet) -> npt.NDArray[np.float64]:
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    if len(pred) == len(truth):
        return pred[truth.visible]
    if len(pred) == truth.visible_count:
        return pred
    raise ValueError(
        f"{len(pred)} predictions for {len(truth)} keypoints ({truth.visible_count} visible)"
    )



def keypoint_errors(predicted: npt.ArrayLike, truth: KeypointSet) -> npt.NDArray[np.float64]:
    """Pixel distances of the visible keypoints."""
    pred = _visible_predictions(predicted, truth)
    return np.linalg.norm(pred - truth.visible_points(), axis=1)


def within(
    errors: npt.ArrayLike, sides: npt.ArrayLike, alphas: npt.ArrayLike
) -> npt.NDArray[np.bool_]:
    """``errors <= alpha * side`` for every alpha (rows) and keypoint (columns)."""
    err = np.asarray(errors, dtype=np.float64)
    alpha_arr = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    limits = np.multiply.outer(alpha_arr, np.asarray(sides, dtype=np.float64))
    return err[None, :] <= limits + THRESHOLD_SLACK


def pck(predicted: npt.ArrayLike, truth: KeypointSet, alpha: float) -> Optional[float]:
    """Fraction of visible keypoints within ``alpha * max(w, h)``; ``None`` if none is visible.

    Args:
        predicted: One point per keypoint, or one per visible keypoint
        truth: Ground truth in the target image
        alpha: Threshold relative to the object box
    """
    if truth.visible_count == 0:
        return None
    errors = keypoint_errors(predicted, truth)
    sides = np.full(len(errors), truth.max_side)
    return float(within(errors, sides, alpha)[0].mean())


def pck_curve(
    predictions: Sequence[npt.ArrayLike],
    truths: Sequence[KeypointSet],
    alphas: npt.ArrayLike,
) -> npt.NDArray[np.float64]:
    """PCK at every alpha, pooled over all visible keypoints of all instances.

    Returns an all-NaN curve when no keypoint is visible.
    """
    alpha_arr = np.asarray(alphas, dtype=np.float64)
    errors: List[npt.NDArray[np.float64]] = []
    sides: List[npt.NDArray[np.float64]] = []
    for pred, truth in zip(predictions, truths):
        if truth.visible_count:
            err = keypoint_errors(pred, truth)
            errors.append(err)
            sides.append(np.full(len(err), truth.max_side))
    if not errors:
        return np.full(alpha_arr.shape, np.nan)
    return within(np.concatenate(errors), np.concatenate(sides), alpha_arr).mean(axis=1)


def pck_auc(alphas: npt.ArrayLike, curve: npt.ArrayLike) -> float:
    """Trapezoidal area under the curve, divided by the alpha range."""
    a = np.asarray(alphas, dtype=np.float64)
    c = np.asarray(curve, dtype=np.float64)
    return float(np.trapezoid(c, a) / (a[-1] - a[0]))


def class_balanced_curve(
    predictions: Sequence[npt.ArrayLike],
    truths: Sequence[KeypointSet],
    classes: Sequence[str],
    alphas: npt.ArrayLike,
) -> Dict[str, npt.NDArray[np.float64]]:
    """Per-class curves plus their mean under the key ``"mean"``."""
    curves: Dict[str, npt.NDArray[np.float64]] = {}
    for name in dict.fromkeys(classes):
        members = [i for i, c in enumerate(classes) if c == name]
        curve = pck_curve([predictions[i] for i in members], [truths[i] for i in members], alphas)
        if not np.isnan(curve).all():
            curves[name] = curve
    per_class: List[npt.NDArray[np.float64]] = list(curves.values())
    curves["mean"] = (
        np.mean(per_class, axis=0) if per_class
        else np.full(np.shape(alphas), np.nan)
    )
    return curves
