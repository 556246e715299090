"""
Few-shot keypoint detection on frozen features.

A small head (3x3 conv, batch norm, ReLU, 3x3 conv, sigmoid) regresses one
heatmap per landmark of a family from frozen extractor features. The protocol
runs in rounds: every round adds a few randomly drawn annotated scenes per
family, continues training the heads from the previous round and scores them
on held-out scenes by the area under the class-balanced PCK curve. The whole
protocol is repeated for several seeds and averaged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import torch
from torch import nn
from typing_extensions import override

from geostable.config import FewShotConfig
from geostable.correspondence.frames import FrameSpec
from geostable.evaluation.features import FeatureExtractor
from geostable.evaluation.pck import alpha_grid, class_balanced_curve, pck_auc
from geostable.evaluation.transfer import refine_peak
from geostable.geometry.keypoints import KeypointSet
from geostable.synthdata.scenes import SceneDataset, SynthScene

logger = logging.getLogger(__name__)


class KeypointHead(nn.Module):
    """Two-layer convolutional heatmap regressor with one sigmoid channel per keypoint."""

    def __init__(self, in_channels: int, n_keypoints: int, width: int = 512) -> None:
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, width, kernel_size=3, stride=1, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, n_keypoints, kernel_size=3, stride=1, padding=1),
        )

    @override
    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.body(features))


def heatmap_targets(
    keypoints: KeypointSet,
    frame: FrameSpec,
    sigma_rel: float = 0.05,
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    """Gaussian targets on the feature grid.

    Each keypoint gets ``exp(-d^2 / (2 s^2))`` over the cell centres with
    ``s = sigma_rel * max(w, h)``; invisible keypoints get an all-zero map.

    Returns:
        ``((K, H', W') targets, (K,) visibility)``
    """
    rows, cols = frame.grid_shape
    centers = frame.cell_centers()
    scale = max(sigma_rel * keypoints.max_side, 1e-6)
    targets = np.zeros((len(keypoints), rows, cols), dtype=np.float64)
    for k in np.flatnonzero(keypoints.visible):
        d2 = np.sum((centers - keypoints.points[k]) ** 2, axis=1)
        targets[k] = np.exp(-d2 / (2.0 * scale**2)).reshape(rows, cols)
    return targets, keypoints.visible.copy()


def heatmap_loss(
    predicted: torch.Tensor,
    targets: torch.Tensor,
    visible: torch.Tensor,
    positive_weight: float = 10.0,
) -> torch.Tensor:
    """Weighted squared error: ``positive_weight`` where the target exceeds 0.5, 1 elsewhere.

    Channels of invisible keypoints carry no weight.
    """
    weights = 1.0 + (positive_weight - 1.0) * (targets > 0.5).to(targets.dtype)
    weights = weights * visible[:, :, None, None].to(weights.dtype)
    return (weights * (predicted - targets) ** 2).mean()


def predict_keypoints(heatmaps: npt.NDArray[np.float64], stride: int) -> npt.NDArray[np.float64]:
    """``(K, 2)`` pixel positions of the refined heatmap peaks."""
    points = np.empty((heatmaps.shape[0], 2), dtype=np.float64)
    for k, heatmap in enumerate(heatmaps):
        row, col = np.unravel_index(int(np.argmax(heatmap)), heatmap.shape)
        row_f, col_f = refine_peak(heatmap, int(row), int(col))
        points[k] = ((col_f + 0.5) * stride, (row_f + 0.5) * stride)
    return points


class FeatureCache:
    """Extractor features and heatmap targets per scene, computed once."""

    def __init__(self, extractor: FeatureExtractor, sigma_rel: float) -> None:
        self.extractor = extractor
        self.sigma_rel = sigma_rel
        self._entries: Dict[int, Tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = {}

    def get(self, scene: SynthScene) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """``(features, targets, visible)`` of one scene."""
        key = id(scene)
        if key not in self._entries:
            features = self.extractor.feature_map(scene.image).float()
            frame = FrameSpec(scene.image.shape[0], scene.image.shape[1], self.extractor.stride)
            targets, visible = heatmap_targets(scene.keypoints, frame, self.sigma_rel)
            self._entries[key] = (
                features,
                torch.as_tensor(targets, dtype=torch.float32),
                torch.as_tensor(visible),
            )
        return self._entries[key]


def train_head(
    head: KeypointHead,
    scenes: Sequence[SynthScene],
    cache: FeatureCache,
    config: FewShotConfig,
    rng: np.random.Generator,
) -> float:
    """Train *head* in place for ``max(min_steps, epochs * batches)`` steps; returns the last loss.

    Raises:
        ValueError: If *scenes* is empty
    """
    if not scenes:
        raise ValueError("Cannot train a keypoint head without annotated scenes")
    batches = math.ceil(len(scenes) / config.batch_size)
    steps = max(config.min_steps, config.epochs * batches)
    optimizer = torch.optim.Adam(head.parameters(), lr=config.learning_rate)
    entries = [cache.get(scene) for scene in scenes]
    head.train()
    loss = torch.zeros(())
    for _ in range(steps):
        chosen = rng.choice(len(entries), size=min(config.batch_size, len(entries)), replace=False)
        features = torch.stack([entries[i][0] for i in chosen])
        targets = torch.stack([entries[i][1] for i in chosen])
        visible = torch.stack([entries[i][2] for i in chosen])
        loss = heatmap_loss(head(features), targets, visible, config.positive_weight)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
    return float(loss.detach())


def evaluate_heads(
    heads: Dict[str, KeypointHead],
    heldout: SceneDataset,
    cache: FeatureCache,
    alphas: npt.ArrayLike,
) -> npt.NDArray[np.float64]:
    """Class-balanced PCK curve of the heads on held-out scenes."""
    predictions: List[npt.NDArray[np.float64]] = []
    truths: List[KeypointSet] = []
    classes: List[str] = []
    stride = cache.extractor.stride
    for scene in heldout:
        head = heads.get(scene.family)
        if head is None:
            continue
        head.eval()
        with torch.no_grad():
            heatmaps = head(cache.get(scene)[0][None])[0].double().numpy()
        predictions.append(predict_keypoints(heatmaps, stride))
        truths.append(scene.keypoints)
        classes.append(scene.family)
    return class_balanced_curve(predictions, truths, classes, alphas)["mean"]


@dataclass
class FewShotRound:
    """Outcome of one annotation budget, averaged over seeds."""
    round: int
    annotated_per_family: int
    auc: float
    auc_per_seed: List[float]
    curve: List[float]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {
            "round": self.round,
            "annotated_per_family": self.annotated_per_family,
            "auc": self.auc,
            "auc_per_seed": list(self.auc_per_seed),
            "curve": list(self.curve),
        }


@dataclass
class FewShotResult:
    """PCK-AUC against the annotation budget."""
    extractor: str
    alphas: List[float]
    rounds: List[FewShotRound] = field(default_factory=list)

    def budgets(self) -> List[int]:
        return [r.annotated_per_family for r in self.rounds]

    def aucs(self) -> List[float]:
        return [r.auc for r in self.rounds]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {
            "extractor": self.extractor,
            "alphas": list(self.alphas),
            "rounds": [r.to_dict() for r in self.rounds],
        }


def _run_seed(
    seed: int,
    annotations: SceneDataset,
    heldout: SceneDataset,
    cache: FeatureCache,
    config: FewShotConfig,
    alphas: npt.NDArray[np.float64],
) -> List[Tuple[int, npt.NDArray[np.float64]]]:
    rng = np.random.default_rng(seed)
    members = {family: annotations.by_family(family) for family in annotations.families()}
    families = list(members)
    in_channels = int(cache.get(annotations[0])[0].shape[0])
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        heads = {
            family: KeypointHead(in_channels, len(scenes[0].keypoints), config.head_width)
            for family, scenes in members.items()
        }
        pools = {
            family: [scenes[int(i)] for i in rng.permutation(len(scenes))]
            for family, scenes in members.items()
        }
        chosen: Dict[str, List[SynthScene]] = {family: [] for family in families}
        outcomes = []
        for round_index in range(config.rounds):
            for family in families:
                take = pools[family][:config.images_per_round]
                pools[family] = pools[family][config.images_per_round:]
                chosen[family].extend(take)
                loss = train_head(heads[family], chosen[family], cache, config, rng)
                logger.debug(
                    "seed %d round %d %s: %d scenes, loss %.6f",
                    seed, round_index, family, len(chosen[family]), loss,
                )
            budget = max(len(c) for c in chosen.values())
            outcomes.append((budget, evaluate_heads(heads, heldout, cache, alphas)))
    return outcomes


def few_shot_keypoint_eval(
    extractor: FeatureExtractor,
    annotations: SceneDataset,
    heldout: SceneDataset,
    config: Optional[FewShotConfig] = None,
    alphas: Optional[npt.ArrayLike] = None,
) -> FewShotResult:
    """Run the few-shot protocol for every seed and average the rounds.

    Args:
        extractor: Frozen features
        annotations: Annotated pool the rounds draw from
        heldout: Scenes the heads are scored on
        config: Rounds, head schedule and heatmap parameters
        alphas: PCK thresholds; defaults to 31 points on [0, 0.3]

    Returns:
        FewShotResult with one entry per round

    Raises:
        ValueError: If the annotation pool or the held-out set is empty
    """
    config = config or FewShotConfig()
    if len(annotations) == 0:
        raise ValueError("Few-shot evaluation needs a nonempty annotation pool")
    if len(heldout) == 0:
        raise ValueError("Few-shot evaluation needs held-out scenes")
    alpha_arr = alpha_grid() if alphas is None else np.asarray(alphas, dtype=np.float64)
    cache = FeatureCache(extractor, config.sigma_rel)

    per_seed = [
        _run_seed(seed, annotations, heldout, cache, config, alpha_arr) for seed in config.seeds
    ]
    result = FewShotResult(extractor.name, alpha_arr.tolist())
    for round_index in range(config.rounds):
        curves = [outcomes[round_index][1] for outcomes in per_seed]
        aucs = [pck_auc(alpha_arr, curve) for curve in curves]
        result.rounds.append(FewShotRound(
            round=round_index,
            annotated_per_family=per_seed[0][round_index][0],
            auc=float(np.mean(aucs)),
            auc_per_seed=aucs,
            curve=np.mean(curves, axis=0).tolist(),
        ))
        logger.info(
            "%s: %d scenes per family, PCK-AUC %.4f",
            extractor.name, per_seed[0][round_index][0], result.rounds[-1].auc,
        )
    return result
