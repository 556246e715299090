"""
Correspondence module.

Turns a known warp into supervision: anchor/target pixel pairs, labels from
pixel distances and hard-negative selection with balanced pair weights.
"""

from .frames import FrameSpec
from .labels import IGNORED, NEGATIVE, POSITIVE, assign_label, label_matrix
from .batch import PixelPairBatch, balanced_weights, sample_pairs
from .mining import mine_hard_negatives, top_k_negatives

__all__ = [
    "FrameSpec",
    "IGNORED",
    "NEGATIVE",
    "POSITIVE",
    "assign_label",
    "label_matrix",
    "PixelPairBatch",
    "balanced_weights",
    "sample_pairs",
    "mine_hard_negatives",
    "top_k_negatives",
]
