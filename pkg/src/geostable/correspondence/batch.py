"""
Pixel-pair batches across a warp pair.

Anchors are feature-grid cells of the first image whose warp image lands inside
the second frame; targets are those warp images. Every anchor is paired with
every target, so ``labels`` is a full ``n x n`` matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict

import numpy as np
import numpy.typing as npt

from geostable.correspondence.frames import FrameSpec
from geostable.correspondence.labels import (
    DEFAULT_TAU1,
    DEFAULT_TAU2,
    NEGATIVE,
    POSITIVE,
    label_matrix,
)
from geostable.exceptions import DegenerateBatchError
from geostable.geometry.warps import AffineWarp

logger = logging.getLogger(__name__)

DEFAULT_POINTS = 700


@dataclass(frozen=True, eq=False)
class PixelPairBatch:
    """Anchors, targets and the pair selection for one image pair.

    Attributes:
        anchor_cells: ``(n, 2)`` grid cells ``(row, col)`` of the anchors in the first image
        anchors: ``(n, 2)`` anchor pixel centres ``(x, y)`` in the first image
        targets: ``(n, 2)`` target pixel positions in the second image, ``g(anchors)``
        labels: ``(n, n)`` int8 labels; row = anchor, column = target
        weights: ``(n, n)`` nonnegative pair weights, zero outside ``selected``
        selected: ``(n, n)`` mask of pairs entering the loss
        frame_a: Frame of the first image
        frame_b: Frame of the second image
    """
    anchor_cells: npt.NDArray[np.int64]
    anchors: npt.NDArray[np.float64]
    targets: npt.NDArray[np.float64]
    labels: npt.NDArray[np.int8]
    weights: npt.NDArray[np.float64]
    selected: npt.NDArray[np.bool_]
    frame_a: FrameSpec
    frame_b: FrameSpec

    @property
    def size(self) -> int:
        return int(self.anchors.shape[0])

    def positives(self) -> npt.NDArray[np.bool_]:
        return self.labels == POSITIVE

    def negatives(self) -> npt.NDArray[np.bool_]:
        return self.labels == NEGATIVE

    def selected_positives(self) -> npt.NDArray[np.bool_]:
        return self.selected & self.positives()

    def selected_negatives(self) -> npt.NDArray[np.bool_]:
        return self.selected & self.negatives()

    def with_selection(self, selected: npt.NDArray[np.bool_]) -> "PixelPairBatch":
        """Copy with a new selection and balanced weights."""
        selected = np.asarray(selected, dtype=bool) & (self.labels != 0)
        return replace(self, selected=selected, weights=balanced_weights(self.labels, selected))

    def summary(self) -> Dict[str, Any]:
        return {
            "anchors": self.size,
            "positives": int(self.selected_positives().sum()),
            "negatives": int(self.selected_negatives().sum()),
        }


def balanced_weights(
    labels: npt.NDArray[np.int8],
    selected: npt.NDArray[np.bool_],
) -> npt.NDArray[np.float64]:
    """Uniform weights per group; selected positives and selected negatives each sum to 1/2.

    An empty group contributes no mass.
    """
    weights = np.zeros(labels.shape, dtype=np.float64)
    for group in (selected & (labels == POSITIVE), selected & (labels == NEGATIVE)):
        count = int(group.sum())
        if count:
            weights[group] = 0.5 / count
    return weights


def sample_pairs(
    warp: AffineWarp,
    frame_a: FrameSpec,
    frame_b: FrameSpec,
    rng: np.random.Generator,
    n_points: int = DEFAULT_POINTS,
    tau1: float = DEFAULT_TAU1,
    tau2: float = DEFAULT_TAU2,
) -> PixelPairBatch:
    """Draw anchors on the first frame and label all anchor/target pairs.

    Args:
        warp: Point map from the first image to the second, in pixels
        frame_a: Frame of the first image
        frame_b: Frame of the second image
        rng: Random source
        n_points: Anchors to draw; fewer are taken when fewer cells are valid
        tau1: Positive radius in pixels
        tau2: Ignore radius in pixels

    Returns:
        Batch with every non-ignored pair selected and balanced weights

    Raises:
        DegenerateBatchError: If fewer than two anchors map inside the second frame
    """
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")

    centers = frame_a.cell_centers()
    warped = warp(centers)
    valid = np.flatnonzero(frame_b.contains(warped))
    if valid.size < 2:
        raise DegenerateBatchError(
            f"Only {valid.size} of {len(centers)} anchors map inside the second frame"
        )

    chosen = rng.choice(valid, size=min(n_points, valid.size), replace=False)
    targets = warped[chosen]
    # Each anchor's own warp image is its target, so anchor i vs target j
    # compares g(u_i) with g(u_j).
    labels = label_matrix(targets, targets, tau1, tau2)
    selected = labels != 0
    logger.debug("Sampled %d anchors out of %d valid cells", chosen.size, valid.size)

    return PixelPairBatch(
        anchor_cells=frame_a.cell_of(chosen),
        anchors=centers[chosen],
        targets=targets,
        labels=labels,
        weights=balanced_weights(labels, selected),
        selected=selected,
        frame_a=frame_a,
        frame_b=frame_b,
    )
