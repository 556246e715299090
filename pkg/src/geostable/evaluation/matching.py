"""
Warped-pair matching protocol and confidence introspection readout.

Every evaluation pair is a held-out scene warped twice with the training warp
distribution. Keypoints and region proposals of the first view are matched
into the second, and the known point map gives the ground truth: keypoints
move with it and target boxes are the clipped bounds of the warped proposal.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from geostable.config import EvalConfig, PhotometricConfig, WarpConfig
from geostable.correspondence.frames import FrameSpec
from geostable.evaluation.features import FeatureExtractor
from geostable.evaluation.pck import alpha_grid, pck_auc, pck_curve
from geostable.evaluation.regions import (
    grid_proposals,
    match_ious,
    match_regions,
    miou_at_k,
    pcr_curve,
    pool_proposals,
    target_box,
)
from geostable.evaluation.report import MetricReport
from geostable.evaluation.transfer import transfer_keypoints
from geostable.geometry.imaging import warp_mask
from geostable.geometry.keypoints import Box, KeypointSet, mask_box, warp_box
from geostable.geometry.pairs import make_warp_pair
from geostable.geometry.warps import AffineWarp
from geostable.synthdata.scenes import SceneDataset

logger = logging.getLogger(__name__)

# Proposals whose warped box keeps less than this share inside the target are not scored
MIN_VISIBLE_FRACTION = 0.5


@dataclass
class _Accumulator:
    predictions: List[npt.NDArray[np.float64]] = dataclasses.field(default_factory=list)
    truths: List[KeypointSet] = dataclasses.field(default_factory=list)
    ious: List[npt.NDArray[np.float64]] = dataclasses.field(default_factory=list)
    miou_rows: List[npt.NDArray[np.float64]] = dataclasses.field(default_factory=list)
    degenerate: int = 0
    skipped: int = 0


def _scored_proposals(
    boxes: List[Box], pairwise: AffineWarp, size: int
) -> Tuple[List[Box], List[Box]]:
    sources: List[Box] = []
    truths: List[Box] = []
    for box in boxes:
        truth = target_box(box, pairwise, size, size)
        if truth is None:
            continue
        warped = warp_box(box, pairwise)
        if truth[2] * truth[3] < MIN_VISIBLE_FRACTION * warped[2] * warped[3]:
            continue
        sources.append(box)
        truths.append(truth)
    return sources, truths


def evaluate_matching(
    extractor: FeatureExtractor,
    scenes: SceneDataset,
    config: Optional[EvalConfig] = None,
    warp: Optional[WarpConfig] = None,
    photometric: Optional[PhotometricConfig] = None,
    name: str = "match",
) -> MetricReport:
    """PCK, PCR and mIoU@k of *extractor* on ``config.pairs`` warped pairs.

    Args:
        extractor: Frozen features under test
        scenes: Held-out scenes, used round-robin
        config: Protocol parameters
        warp: Warp distribution of the pairs
        photometric: Colour jitter, applied only when ``config.photometric`` is set
        name: Report name

    Returns:
        MetricReport; ``extra`` records pair, skip and degenerate counts

    Raises:
        ValueError: If *scenes* is empty
        WarpSamplingError: If warp sampling fails
    """
    config = config or EvalConfig()
    warp = warp or WarpConfig()
    if len(scenes) == 0:
        raise ValueError("Matching evaluation needs at least one scene")
    jitter = photometric if config.photometric else None
    rng = np.random.default_rng(config.seed)
    alphas = alpha_grid(config.alpha_max, config.alpha_steps)
    thresholds = np.linspace(0.0, 1.0, config.iou_steps)
    acc = _Accumulator()

    for index in range(config.pairs):
        scene = scenes[index % len(scenes)]
        size = scene.image.shape[0]
        x_a, x_b, sample = make_warp_pair(scene.image, rng, warp, jitter, (size, size))
        mask_a = warp_mask(scene.mask, sample.warp_a, (size, size))
        mask_b = warp_mask(scene.mask, sample.warp_b, (size, size))
        if not mask_a.any() or not mask_b.any():
            acc.skipped += 1
            continue

        keypoints_a = dataclasses.replace(
            scene.keypoints.transformed(sample.warp_a, size, size), box=mask_box(mask_a)
        )
        truth_b = dataclasses.replace(
            keypoints_a.transformed(sample.pairwise, size, size), box=mask_box(mask_b)
        )
        fields_a = extractor.fields(x_a)
        fields_b = extractor.fields(x_b)
        transferred = transfer_keypoints(fields_a, fields_b, keypoints_a, extractor.use_confidence)
        acc.predictions.append(transferred.points)
        acc.truths.append(truth_b)
        acc.degenerate += int(transferred.degenerate[truth_b.visible].sum())

        boxes = grid_proposals(
            size, size, config.proposal_scales, config.proposal_aspects, config.proposal_step
        )
        sources, truths = _scored_proposals(boxes, sample.pairwise, size)
        if not sources:
            continue
        proposals_a = pool_proposals(*fields_a, sources, config.roi_bins, extractor.use_confidence)
        proposals_b = pool_proposals(*fields_b, boxes, config.roi_bins, extractor.use_confidence)
        match = match_regions(proposals_a, proposals_b)
        ious = match_ious(match, boxes, truths)
        acc.ious.append(ious)
        acc.miou_rows.append(miou_at_k(ious, match.scores, config.k_values))

    pck = pck_curve(acc.predictions, acc.truths, alphas)
    pck_at = float(pck_curve(acc.predictions, acc.truths, [config.pck_alpha])[0])
    ious_all = np.concatenate(acc.ious) if acc.ious else np.zeros(0)
    miou = (
        np.mean(acc.miou_rows, axis=0) if acc.miou_rows
        else np.full(len(config.k_values), np.nan)
    )
    report = MetricReport(
        name=name,
        alphas=alphas.tolist(),
        pck=pck.tolist(),
        iou_thresholds=thresholds.tolist(),
        pcr=pcr_curve(ious_all, thresholds).tolist(),
        k_values=list(config.k_values),
        miou=miou.tolist(),
        pck_at=pck_at,
        pck_alpha=config.pck_alpha,
        pck_auc=pck_auc(alphas, pck) if not np.isnan(pck).all() else None,
        extra={
            "extractor": extractor.name,
            "use_confidence": extractor.use_confidence,
            "pairs": config.pairs - acc.skipped,
            "skipped_pairs": acc.skipped,
            "matched_regions": int(ious_all.size),
            "degenerate_keypoints": acc.degenerate,
        },
    )
    report.validate()
    if acc.degenerate:
        logger.warning("%d transferred keypoints had a flat similarity map", acc.degenerate)
    logger.info("%s: PCK@%.2f = %.4f over %d pairs", name, config.pck_alpha, pck_at, config.pairs)
    return report


@dataclass(frozen=True)
class ConfidenceContrast:
    """Mean inverse sigma over foreground and background cells."""
    foreground: float
    background: float

    @property
    def ratio(self) -> float:
        return self.foreground / self.background if self.background > 0 else float("inf")

    def to_dict(self) -> Dict[str, float]:
        """Convert to dictionary representation."""
        return {"foreground": self.foreground, "background": self.background, "ratio": self.ratio}


def foreground_cells(mask: npt.ArrayLike, stride: int) -> npt.NDArray[np.bool_]:
    """``(H', W')`` flags of the cells whose centre pixel lies on the mask."""
    arr = np.asarray(mask, dtype=bool)
    frame = FrameSpec(arr.shape[0], arr.shape[1], stride)
    centers = np.floor(frame.cell_centers()).astype(np.int64)
    return arr[centers[:, 1], centers[:, 0]].reshape(frame.grid_shape)


def confidence_contrast(extractor: FeatureExtractor, scenes: SceneDataset) -> ConfidenceContrast:
    """Mean confidence ``1 / sigma`` on object cells against background cells.

    Raises:
        ValueError: If the scenes have no foreground or no background cells
    """
    fg_sum = bg_sum = 0.0
    fg_count = bg_count = 0
    for scene in scenes:
        _, confidence = extractor.fields(scene.image)
        inverse = 1.0 / confidence.sigma.double().cpu().numpy()
        fg = foreground_cells(scene.mask, confidence.stride)
        fg_sum += float(inverse[fg].sum())
        bg_sum += float(inverse[~fg].sum())
        fg_count += int(fg.sum())
        bg_count += int((~fg).sum())
    if fg_count == 0 or bg_count == 0:
        raise ValueError("Confidence contrast needs both foreground and background cells")
    return ConfidenceContrast(fg_sum / fg_count, bg_sum / bg_count)
