"""Shared pytest configuration and fixtures for geostable tests."""

from typing import Any, Dict

import numpy as np
import pytest

from geostable.config import BackboneConfig, RunConfig, SceneConfig
from geostable.model.net import DescriptorNet, build_descriptor_net
from geostable.synthdata.scenes import SceneDataset, generate_dataset


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Include tests marked @pytest.mark.slow (desk-scale training experiments)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: marks tests as slow (skipped unless --run-slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="slow test, pass --run-slow to include")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# A network and scene size that keep every non-slow test on CPU in seconds.
TINY_OVERRIDES: Dict[str, Any] = {
    "model.descriptor_dim": 8,
    "model.widths": (8, 8, 8),
    "model.strides": (1, 2, 2),
    "model.tap_index": 1,
    "scene.canvas": 32,
    "data.image_size": 32,
    "pairs.n_points": 40,
    "pairs.hard_negatives": 5,
    "pairs.tau2": 6.0,
    "train.max_steps": 3,
    "train.checkpoint_every": 0,
    "eval.pairs": 2,
    "eval.proposal_scales": (12.0, 16.0),
    "eval.proposal_aspects": (1.0,),
    "eval.proposal_step": 8,
    "eval.roi_bins": 2,
    "viz.channels": 2,
}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config() -> RunConfig:
    return RunConfig(TINY_OVERRIDES)


@pytest.fixture
def tiny_backbone(tiny_config: RunConfig) -> BackboneConfig:
    return BackboneConfig.from_run_config(tiny_config)


@pytest.fixture
def tiny_net(tiny_backbone: BackboneConfig) -> DescriptorNet:
    return build_descriptor_net(tiny_backbone)


@pytest.fixture(scope="session")
def small_scenes() -> SceneDataset:
    return generate_dataset(8, seed=0, config=SceneConfig(canvas=32))
