"""
Synthdata module.

Procedural object scenes with exact masks and landmarks, and the on-disk
dataset format used by training and evaluation.
"""

from .scenes import (
    TEMPLATES,
    SceneDataset,
    SynthScene,
    generate_dataset,
    generate_scene,
    landmark_names,
    scene_seeds,
)
from .storage import (
    DATASET_VERSION,
    INDEX_FILE,
    read_dataset,
    read_index,
    read_scene,
    write_dataset,
)

__all__ = [
    "TEMPLATES",
    "SceneDataset",
    "SynthScene",
    "generate_dataset",
    "generate_scene",
    "landmark_names",
    "scene_seeds",
    "DATASET_VERSION",
    "INDEX_FILE",
    "read_dataset",
    "read_index",
    "read_scene",
    "write_dataset",
]
