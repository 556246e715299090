"""
geostable - Self-supervised dense descriptors with per-pixel matching confidence.

A small convolutional network maps an image to a unit-norm descriptor per
feature-grid cell plus an inverse confidence sigma. It is trained without
labels: every training pair is one image warped twice by known random affine
maps, so the correspondence between the two views is exact. A likelihood
conditioned on sigma lets the network say where its own descriptors will not
match.

Usage:
    >>> import geostable
    >>> scenes = geostable.generate_dataset(8, seed=0)
    >>> cfg = geostable.RunConfig({"train.max_steps": 10})
    >>> result = geostable.train(scenes, cfg)
    >>> field, confidence = geostable.describe(result.state.net, scenes[0].image)

Key components:
- geometry: affine warps, mirror-padded resampling, warp pairs, keypoints
- correspondence: pixel-pair labels, balanced batches, hard negative mining
- probloss: matching score, likelihood objective and gradient checks
- model: descriptor network and dense fields
- trainer: optimizer, checkpoints and the training loop
- evaluation: PCK, region matching, few-shot keypoints, metric reports
- synthdata: procedural scenes with exact masks and landmarks
"""

from .config import RunConfig
from .exceptions import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DegenerateBatchError,
    GeostableError,
    NonInvertibleWarpError,
    UsageError,
    VersionMismatchError,
    WarpSamplingError,
)
from .geometry import AffineWarp, KeypointSet, make_warp_pair
from .model import DescriptorNet, build_descriptor_net, describe
from .synthdata import SceneDataset, generate_dataset, read_dataset, write_dataset
from .trainer import load_state, train
from .evaluation import FeatureExtractor, MetricReport, evaluate_matching, few_shot_keypoint_eval

# Version
__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DegenerateBatchError",
    "GeostableError",
    "NonInvertibleWarpError",
    "UsageError",
    "VersionMismatchError",
    "WarpSamplingError",
    "AffineWarp",
    "KeypointSet",
    "make_warp_pair",
    "DescriptorNet",
    "build_descriptor_net",
    "describe",
    "SceneDataset",
    "generate_dataset",
    "read_dataset",
    "write_dataset",
    "load_state",
    "train",
    "FeatureExtractor",
    "MetricReport",
    "evaluate_matching",
    "few_shot_keypoint_eval",
    "__version__",
]
