"""
Frozen feature extractors for evaluation.

A FeatureExtractor wraps a network in evaluation mode and hands out its dense
fields and a feature map for downstream heads: confidence-scaled descriptors
concatenated with the intermediate tap resampled to the descriptor grid.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy.typing as npt
import torch
import torch.nn.functional as F

from geostable.config import BackboneConfig
from geostable.model.fields import NORM_FLOOR, ConfidenceField, DenseDescriptorField
from geostable.model.net import DescriptorNet, build_descriptor_net, describe, snapshot
from geostable.trainer.state import load_net

logger = logging.getLogger(__name__)


class FeatureExtractor:
    """Read-only view of a descriptor network.

    Attributes:
        net: Frozen network copy
        use_confidence: Divide descriptors by ``sigma`` in ``feature_map``
        include_tap: Append the intermediate tap to ``feature_map``
        name: Label used in reports
    """

    def __init__(
        self,
        net: DescriptorNet,
        use_confidence: bool = True,
        include_tap: bool = True,
        name: str = "trained",
    ) -> None:
        self.net = snapshot(net)
        self.use_confidence = use_confidence
        self.include_tap = include_tap
        self.name = name

    @classmethod
    def from_checkpoint(cls, path: Path, use_confidence: bool = True) -> "FeatureExtractor":
        """Extractor over the network stored in a training checkpoint.

        Raises:
            CheckpointError: If the checkpoint cannot be loaded
            VersionMismatchError: If its format version differs
        """
        net, _ = load_net(path)
        logger.info("Loaded features from %s", path)
        return cls(net, use_confidence, name=Path(path).stem)

    @classmethod
    def random_init(
        cls,
        config: Optional[BackboneConfig] = None,
        use_confidence: bool = True,
    ) -> "FeatureExtractor":
        """Extractor over an untrained network with the same architecture."""
        return cls(build_descriptor_net(config), use_confidence, name="random")

    @property
    def stride(self) -> int:
        return self.net.stride

    def fields(self, image: npt.ArrayLike) -> Tuple[DenseDescriptorField, ConfidenceField]:
        return describe(self.net, image)

    def feature_map(self, image: npt.ArrayLike) -> torch.Tensor:
        """``(D, H', W')`` features of one image on the descriptor grid."""
        field, confidence = self.fields(image)
        features = field.descriptors
        if self.use_confidence:
            features = features / confidence.sigma[None]
        if self.include_tap and field.tap is not None:
            tap = F.normalize(field.tap, dim=0, eps=NORM_FLOOR)
            tap = F.adaptive_avg_pool2d(tap[None], field.grid_shape)[0]
            features = torch.cat([features, tap], dim=0)
        return features.detach()

    @property
    def feature_dim(self) -> int:
        backbone = self.net.backbone
        tap = int(backbone.tap_channels or 0) if self.include_tap else 0
        return self.net.descriptor_dim + tap
