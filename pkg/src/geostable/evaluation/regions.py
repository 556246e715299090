"""
Region matching.

Proposals are pooled into fixed-size descriptors (max-pooling over a bins x
bins grid laid over the box, confidence-scaled descriptors concatenated with
the intermediate tap), matched across images by cosine similarity and scored
against ground-truth boxes transferred through the known warp:

- PCR(t): fraction of matches whose IoU with the true box is at least ``t``
- mIoU@k: mean IoU of the ``k`` matches with the highest similarity
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from geostable.geometry.keypoints import Box, warp_box
from geostable.geometry.warps import AffineWarp
from geostable.model.fields import NORM_FLOOR, ConfidenceField, DenseDescriptorField

DEFAULT_BINS = 7


@dataclass(frozen=True, eq=False)
class ProposalBox:
    """A box with its pooled descriptor.

    Attributes:
        box: ``(x, y, w, h)`` in pixels
        descriptor: ``(bins, bins, C')`` pooled features
    """
    box: Box
    descriptor: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValueError(f"Proposal must have positive size, got {self.box}")

    def vector(self) -> npt.NDArray[np.float64]:
        """Flattened, L2-normalized descriptor."""
        return flatten_descriptor(self.descriptor)


@dataclass(frozen=True)
class RegionMatch:
    """Best target proposal and its cosine similarity for every source proposal."""
    indices: npt.NDArray[np.int64]
    scores: npt.NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.indices)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two ``(x, y, w, h)`` boxes."""
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return float(inter / union) if union > 0 else 0.0


def grid_proposals(
    height: int,
    width: int,
    scales: Sequence[float],
    aspects: Sequence[float],
    step: int,
) -> List[Box]:
    """Sliding-window boxes inside a ``height x width`` image.

    A box of scale ``s`` and aspect ``a`` is ``s * sqrt(a)`` wide and
    ``s / sqrt(a)`` tall; windows start at multiples of *step* and must fit
    entirely inside the image.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    boxes: List[Box] = []
    for scale in scales:
        for aspect in aspects:
            w = scale * math.sqrt(aspect)
            h = scale / math.sqrt(aspect)
            if w > width or h > height:
                continue
            for y in np.arange(0.0, height - h + 1e-9, step):
                for x in np.arange(0.0, width - w + 1e-9, step):
                    boxes.append((float(x), float(y), float(w), float(h)))
    return boxes


def target_box(box: Box, warp: AffineWarp, height: int, width: int) -> Optional[Box]:
    """Bounds of the warped box clipped to the target frame; ``None`` if nothing is left."""
    x, y, w, h = warp_box(box, warp)
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(width)), min(y + h, float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def _bin_ranges(start: float, stop: float, bins: int, size: int) -> List[Tuple[int, int]]:
    edges = np.linspace(start, stop, bins + 1)
    ranges = []
    for k in range(bins):
        lo = min(max(int(math.floor(edges[k])), 0), size - 1)
        hi = min(max(int(math.ceil(edges[k + 1])), lo + 1), size)
        ranges.append((lo, hi))
    return ranges


def roi_max_pool(
    values: npt.NDArray[np.float64],
    box: Box,
    stride: int,
    bins: int = DEFAULT_BINS,
) -> npt.NDArray[np.float64]:
    """Max-pool a ``(C, H, W)`` grid over a bins x bins partition of *box*.

    Bin edges are taken in grid units (``pixel / stride``); each bin covers the
    cells its edges touch, and a bin narrower than one cell reads the cell
    containing it.

    Returns:
        ``(bins, bins, C)`` pooled values
    """
    _, rows, cols = values.shape
    x, y, w, h = box
    row_ranges = _bin_ranges(y / stride, (y + h) / stride, bins, rows)
    col_ranges = _bin_ranges(x / stride, (x + w) / stride, bins, cols)
    out = np.empty((bins, bins, values.shape[0]), dtype=np.float64)
    for i, (r0, r1) in enumerate(row_ranges):
        for j, (c0, c1) in enumerate(col_ranges):
            out[i, j] = values[:, r0:r1, c0:c1].max(axis=(1, 2))
    return out


def scaled_descriptor_grid(
    field: DenseDescriptorField,
    confidence: ConfidenceField,
    use_confidence: bool = True,
) -> npt.NDArray[np.float64]:
    """``(C, H', W')`` descriptors as float64, divided by ``sigma`` when *use_confidence*."""
    desc = field.descriptors.detach().double().cpu().numpy()
    if use_confidence:
        desc = desc / confidence.sigma.detach().double().cpu().numpy()[None]
    return desc


def pooled_descriptor(
    field: DenseDescriptorField,
    confidence: ConfidenceField,
    box: Box,
    bins: int = DEFAULT_BINS,
    use_confidence: bool = True,
) -> npt.NDArray[np.float64]:
    """``(bins, bins, C')`` pooled descriptor of *box*; the tap, if any, is appended to ``C``."""
    return pool_proposals(field, confidence, [box], bins, use_confidence)[0].descriptor


def flatten_descriptor(pooled: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    flat = np.asarray(pooled, dtype=np.float64).reshape(-1)
    return flat / max(float(np.linalg.norm(flat)), NORM_FLOOR)


def pool_proposals(
    field: DenseDescriptorField,
    confidence: ConfidenceField,
    boxes: Sequence[Box],
    bins: int = DEFAULT_BINS,
    use_confidence: bool = True,
) -> List[ProposalBox]:
    """Pool every box of one image; the scaled grids are converted once."""
    grid = scaled_descriptor_grid(field, confidence, use_confidence)
    tap = field.tap.detach().double().cpu().numpy() if field.tap is not None else None
    proposals = []
    for box in boxes:
        pooled = roi_max_pool(grid, box, field.stride, bins)
        if tap is not None:
            tap_pooled = roi_max_pool(tap, box, field.tap_stride, bins)
            pooled = np.concatenate([pooled, tap_pooled], axis=2)
        corners = tuple(float(v) for v in box)
        proposals.append(ProposalBox(corners, pooled))  # type: ignore[arg-type]
    return proposals


def match_regions(
    proposals_a: Sequence[ProposalBox],
    proposals_b: Sequence[ProposalBox],
) -> RegionMatch:
    """Match every proposal of A to its most similar proposal of B (cosine similarity).

    Raises:
        ValueError: If either list is empty
    """
    if not proposals_a or not proposals_b:
        raise ValueError("Region matching needs proposals in both images")
    a = np.stack([p.vector() for p in proposals_a])
    b = np.stack([p.vector() for p in proposals_b])
    similarity = a @ b.T
    best = np.argmax(similarity, axis=1)
    return RegionMatch(best.astype(np.int64), similarity[np.arange(len(a)), best])


def match_ious(
    match: RegionMatch,
    boxes_b: Sequence[Box],
    true_boxes: Sequence[Box],
) -> npt.NDArray[np.float64]:
    """IoU between each matched box and the true target box of its source proposal."""
    if len(true_boxes) != len(match):
        raise ValueError(f"{len(true_boxes)} true boxes for {len(match)} matches")
    return np.array(
        [iou(boxes_b[int(j)], truth) for j, truth in zip(match.indices, true_boxes)],
        dtype=np.float64,
    )


def pcr_curve(ious: npt.ArrayLike, thresholds: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Fraction of IoUs at or above each threshold."""
    values = np.asarray(ious, dtype=np.float64)
    t = np.asarray(thresholds, dtype=np.float64)
    if values.size == 0:
        return np.full(t.shape, np.nan)
    return (values[None, :] >= t[:, None]).mean(axis=1)


def miou_at_k(
    ious: npt.ArrayLike,
    scores: npt.ArrayLike,
    k_values: Sequence[int],
) -> npt.NDArray[np.float64]:
    """Mean IoU of the ``k`` best-scoring matches; ties keep the lower index first."""
    if any(int(k) < 1 for k in k_values):
        raise ValueError(f"k values must be >= 1, got {list(k_values)}")
    values = np.asarray(ious, dtype=np.float64)
    if values.size == 0:
        return np.full(len(k_values), np.nan)
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    ranked = values[order]
    return np.array([ranked[:min(int(k), len(ranked))].mean() for k in k_values])


def pcr_miou(
    match: RegionMatch,
    boxes_b: Sequence[Box],
    true_boxes: Sequence[Box],
    iou_thresholds: npt.ArrayLike,
    k_values: Sequence[int],
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """PCR over *iou_thresholds* and mIoU@k over *k_values* for one matched image pair."""
    ious = match_ious(match, boxes_b, true_boxes)
    return pcr_curve(ious, iou_thresholds), miou_at_k(ious, match.scores, k_values)
