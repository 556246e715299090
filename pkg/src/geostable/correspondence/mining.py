"""Hard-negative mining per anchor."""

from __future__ import annotations

import numpy as np
import numpy.typing as npt

from geostable.correspondence.batch import PixelPairBatch
from geostable.exceptions import DegenerateBatchError

DEFAULT_HARD_NEGATIVES = 30


def top_k_negatives(
    negatives: npt.NDArray[np.bool_],
    scores: npt.NDArray[np.floating],
    k: int,
) -> npt.NDArray[np.bool_]:
    """Per row, the ``min(k, #negatives)`` best-scoring negatives; ties go to the lower column."""
    n_rows, n_cols = negatives.shape
    keyed = np.where(negatives, -np.asarray(scores, dtype=np.float64), np.inf)
    order = np.argsort(keyed, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(n_cols), (n_rows, n_cols)), axis=1)
    quota = np.minimum(k, negatives.sum(axis=1))
    return negatives & (ranks < quota[:, None])


def mine_hard_negatives(
    batch: PixelPairBatch,
    scores: npt.ArrayLike,
    k: int = DEFAULT_HARD_NEGATIVES,
) -> PixelPairBatch:
    """Keep all positives and, per anchor, the ``k`` negatives with the highest score.

    Scoring is monotone in the negative-pair loss, so the highest scores are the
    pairs that contribute most to it.

    Raises:
        ValueError: If ``scores`` does not match the batch or ``k < 1``
        DegenerateBatchError: If the selection has no positives or no negatives
    """
    score_arr = np.asarray(scores, dtype=np.float64)
    if score_arr.shape != batch.labels.shape:
        raise ValueError(f"scores shape {score_arr.shape} != labels shape {batch.labels.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    positives = batch.positives()
    negatives = top_k_negatives(batch.negatives(), score_arr, k)
    if not positives.any() or not negatives.any():
        raise DegenerateBatchError(
            f"Mined batch has {int(positives.sum())} positives and {int(negatives.sum())} negatives"
        )
    return batch.with_selection(positives | negatives)
