"""
Keypoint transfer by descriptor matching.

Each source keypoint reads its descriptor bilinearly, scales it by ``1 / sigma``
and takes the best-scoring cell of the target grid, whose descriptors are
scaled the same way. The argmax is then refined to sub-cell precision with a
parabola through the neighbouring scores along each axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt
import torch

from geostable.geometry.keypoints import KeypointSet
from geostable.model.fields import ConfidenceField, DenseDescriptorField, descriptors_at, sigma_at

logger = logging.getLogger(__name__)

# Score rows whose range is below this are treated as flat
FLAT_SCORE_RANGE = 1e-9


@dataclass(frozen=True)
class TransferResult:
    """Transferred points for every source keypoint.

    Attributes:
        points: ``(n, 2)`` predicted pixel positions in the target image
        scores: ``(n,)`` best similarity per keypoint
        degenerate: ``(n,)`` True where the similarity map had no unique peak
    """
    points: npt.NDArray[np.float64]
    scores: npt.NDArray[np.float64]
    degenerate: npt.NDArray[np.bool_]

    @property
    def any_degenerate(self) -> bool:
        return bool(self.degenerate.any())


def scaled_queries(
    field: DenseDescriptorField,
    confidence: ConfidenceField,
    points: npt.ArrayLike,
    use_confidence: bool = True,
) -> torch.Tensor:
    """``(n, C)`` descriptors at *points*, divided by ``sigma`` when *use_confidence*."""
    queries = descriptors_at(field, points)
    if use_confidence:
        queries = queries / sigma_at(confidence, points)[:, None]
    return queries


def scaled_grid(
    field: DenseDescriptorField,
    confidence: ConfidenceField,
    use_confidence: bool = True,
) -> torch.Tensor:
    """``(H' * W', C)`` grid descriptors in row-major order, optionally divided by ``sigma``."""
    flat = field.flat()
    if use_confidence:
        flat = flat / confidence.sigma.reshape(-1, 1)
    return flat


def parabola_offset(left: float, center: float, right: float) -> float:
    """Vertex offset in ``[-0.5, 0.5]`` of the parabola through three samples at -1, 0, 1."""
    curvature = left - 2.0 * center + right
    if curvature >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / curvature, -0.5, 0.5))


def refine_peak(scores: npt.NDArray[np.float64], row: int, col: int) -> Tuple[float, float]:
    """Sub-cell ``(row, col)`` of a peak of a 2-D score map; border peaks stay on the cell."""
    rows, cols = scores.shape
    dr = dc = 0.0
    if 0 < row < rows - 1:
        dr = parabola_offset(scores[row - 1, col], scores[row, col], scores[row + 1, col])
    if 0 < col < cols - 1:
        dc = parabola_offset(scores[row, col - 1], scores[row, col], scores[row, col + 1])
    return row + dr, col + dc


def transfer_keypoints(
    source: Tuple[DenseDescriptorField, ConfidenceField],
    target: Tuple[DenseDescriptorField, ConfidenceField],
    keypoints: KeypointSet,
    use_confidence: bool = True,
) -> TransferResult:
    """Map the source keypoints into the target image.

    Args:
        source: Descriptor and confidence fields of the source image
        target: Fields of the target image, from the same extractor
        keypoints: Source keypoints; invisible ones are transferred too
        use_confidence: Scale descriptors by ``1 / sigma`` before matching

    Returns:
        TransferResult with one predicted point per keypoint
    """
    src_field, src_conf = source
    tgt_field, tgt_conf = target
    n = len(keypoints)
    if n == 0:
        return TransferResult(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=bool))

    with torch.no_grad():
        queries = scaled_queries(src_field, src_conf, keypoints.points, use_confidence)
        grid = scaled_grid(tgt_field, tgt_conf, use_confidence)
        similarity = (queries @ grid.T).double().cpu().numpy()

    rows, cols = tgt_field.grid_shape
    stride = tgt_field.stride
    best = np.argmax(similarity, axis=1)
    degenerate = np.ptp(similarity, axis=1) < FLAT_SCORE_RANGE
    points = np.empty((n, 2), dtype=np.float64)
    for k in range(n):
        row, col = divmod(int(best[k]), cols)
        if not degenerate[k]:
            row_f, col_f = refine_peak(similarity[k].reshape(rows, cols), row, col)
        else:
            row_f, col_f = float(row), float(col)
        points[k] = ((col_f + 0.5) * stride, (row_f + 0.5) * stride)

    if degenerate.any():
        logger.debug("%d of %d keypoints had a flat similarity map", int(degenerate.sum()), n)
    return TransferResult(points, similarity[np.arange(n), best], degenerate)
