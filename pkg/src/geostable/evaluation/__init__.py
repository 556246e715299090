"""
Evaluation module.

Measures what learned descriptors are good for: keypoint transfer scored by
PCK, region matching scored by PCR and mIoU@k, confidence introspection, and
few-shot keypoint detection on frozen features.

Key components:
- pck / pck_curve / pck_auc: keypoint accuracy relative to the object box
- transfer_keypoints: confidence-scaled argmax matching with sub-cell refinement
- pooled_descriptor / match_regions / pcr_miou: region matching
- FeatureExtractor: frozen trained or random-init features
- evaluate_matching / confidence_contrast: warped-pair protocol
- few_shot_keypoint_eval: annotation-budget curves
- MetricReport: versioned JSON report with curve plots
"""

from geostable.geometry.keypoints import KeypointSet

from .pck import alpha_grid, class_balanced_curve, keypoint_errors, pck, pck_auc, pck_curve
from .transfer import TransferResult, parabola_offset, refine_peak, transfer_keypoints
from .regions import (
    ProposalBox,
    RegionMatch,
    grid_proposals,
    iou,
    match_ious,
    match_regions,
    miou_at_k,
    pcr_curve,
    pcr_miou,
    pool_proposals,
    pooled_descriptor,
    roi_max_pool,
    target_box,
)
from .features import FeatureExtractor
from .report import MetricReport
from .matching import ConfidenceContrast, confidence_contrast, evaluate_matching, foreground_cells
from .fewshot import (
    FewShotResult,
    FewShotRound,
    KeypointHead,
    few_shot_keypoint_eval,
    heatmap_loss,
    heatmap_targets,
    predict_keypoints,
    train_head,
)

__all__ = [
    "KeypointSet",
    "alpha_grid",
    "class_balanced_curve",
    "keypoint_errors",
    "pck",
    "pck_auc",
    "pck_curve",
    "TransferResult",
    "parabola_offset",
    "refine_peak",
    "transfer_keypoints",
    "ProposalBox",
    "RegionMatch",
    "grid_proposals",
    "iou",
    "match_ious",
    "match_regions",
    "miou_at_k",
    "pcr_curve",
    "pcr_miou",
    "pool_proposals",
    "pooled_descriptor",
    "roi_max_pool",
    "target_box",
    "FeatureExtractor",
    "MetricReport",
    "ConfidenceContrast",
    "confidence_contrast",
    "evaluate_matching",
    "foreground_cells",
    "FewShotResult",
    "FewShotRound",
    "KeypointHead",
    "few_shot_keypoint_eval",
    "heatmap_loss",
    "heatmap_targets",
    "predict_keypoints",
    "train_head",
]
