"""
Self-supervised training loop.

One step renders warp pairs, runs the network on both views, samples anchor
and target pixels from the known warp, mines hard negatives on the current
scores, evaluates the objective and updates the parameters. Training runs
over shuffled epochs until ``max_steps`` or until the smoothed loss stops
improving for ``patience`` epochs.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch

from geostable.config import RunConfig, TrainingConfig
from geostable.correspondence.batch import sample_pairs
from geostable.correspondence.mining import mine_hard_negatives
from geostable.exceptions import DegenerateBatchError
from geostable.geometry.imaging import ImageArray
from geostable.geometry.warps import AffineWarp
from geostable.model.fields import descriptors_at, sigma_at
from geostable.model.net import DescriptorNet, NetOutput, images_to_tensor, output_fields
from geostable.probloss.losses import batch_objective
from geostable.synthdata.scenes import SceneDataset
from geostable.trainer.metrics import MetricsLog, StepMetrics
from geostable.trainer.state import TrainingState, TrainSettings, initial_state, save_state
from geostable.trainer.workers import PairProducer, TrainingPair, render_training_pair

logger = logging.getLogger(__name__)

FINAL_CHECKPOINT = "checkpoint_final.pt"
METRICS_LOG = "metrics.ndjson"
EPOCH_SUMMARY = "epochs.csv"

StepFn = Callable[[TrainingState, Sequence[ImageArray], TrainSettings], StepMetrics]


@dataclass(frozen=True)
class PairOutcome:
    loss: torch.Tensor
    mean_pos_score: float
    mean_neg_score: float


@dataclass
class TrainResult:
    """What a training run leaves behind."""
    state: TrainingState
    checkpoint: Optional[Path]
    metrics_path: Optional[Path]
    stopped_early: bool


def pair_objective(
    output: NetOutput,
    index_a: int,
    index_b: int,
    pairwise: AffineWarp,
    net: DescriptorNet,
    rng: np.random.Generator,
    config: TrainingConfig,
) -> PairOutcome:
    """Objective of one view pair taken from a batched forward pass.

    Raises:
        DegenerateBatchError: If the pair yields too few anchors, positives or negatives
    """
    field_a, conf_a = output_fields(output, net, index_a)
    field_b, conf_b = output_fields(output, net, index_b)
    frame = field_a.frame
    batch = sample_pairs(pairwise, frame, frame, rng, config.n_points, config.tau1, config.tau2)

    rows = torch.as_tensor(np.ascontiguousarray(batch.anchor_cells[:, 0]))
    cols = torch.as_tensor(np.ascontiguousarray(batch.anchor_cells[:, 1]))
    desc_a = field_a.descriptors[:, rows, cols].T
    sigma_a = conf_a.sigma[rows, cols]
    desc_b = descriptors_at(field_b, batch.targets)
    sigma_b = sigma_at(conf_b, batch.targets)

    inner = desc_a @ desc_b.T
    scores = torch.relu(inner).detach().cpu().numpy().astype(np.float64)
    mined = mine_hard_negatives(batch, scores, config.hard_negatives)
    loss = batch_objective(mined, inner, sigma_a, sigma_b, config.loss_variant, config.margin)
    return PairOutcome(
        loss=loss,
        mean_pos_score=float(scores[mined.selected_positives()].mean()),
        mean_neg_score=float(scores[mined.selected_negatives()].mean()),
    )


def train_on_pairs(
    state: TrainingState,
    pairs: Sequence[TrainingPair],
    settings: TrainSettings,
) -> StepMetrics:
    """One optimizer step on already rendered pairs; degenerate pairs are dropped."""
    config = settings.training
    net = state.net.train()
    output = net(images_to_tensor([p.x_a for p in pairs] + [p.x_b for p in pairs]))
    mean_sigma = float(output.sigma.detach().mean())

    outcomes: List[PairOutcome] = []
    for i, pair in enumerate(pairs):
        try:
            outcomes.append(pair_objective(
                output, i, len(pairs) + i, pair.sample.pairwise, net, state.rng, config
            ))
        except DegenerateBatchError as e:
            logger.warning("Skipping degenerate pair at step %d: %s", state.step, e)

    state.step += 1
    if not outcomes:
        state.skipped += 1
        return StepMetrics(state.step, math.nan, math.nan, math.nan, mean_sigma, 0, skipped=True)

    total = torch.stack([o.loss for o in outcomes]).mean()
    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()

    loss = float(total.detach())
    state.update_loss(loss, config.loss_smoothing)
    return StepMetrics(
        step=state.step,
        loss=loss,
        mean_pos_score=float(np.mean([o.mean_pos_score for o in outcomes])),
        mean_neg_score=float(np.mean([o.mean_neg_score for o in outcomes])),
        mean_sigma=mean_sigma,
        pairs=len(outcomes),
    )


def train_step(
    state: TrainingState,
    images: Union[ImageArray, Sequence[ImageArray]],
    settings: TrainSettings,
) -> StepMetrics:
    """Render one warp pair per image with the state's random source and take one step.

    Raises:
        WarpSamplingError: If warp sampling fails
    """
    batch = [images] if isinstance(images, np.ndarray) and images.ndim == 3 else list(images)
    pairs = [
        render_training_pair(
            image, state.rng, settings.warp, settings.photometric, settings.training.image_size
        )
        for image in batch
    ]
    return train_on_pairs(state, pairs, settings)


def _end_epoch(state: TrainingState, config: TrainingConfig) -> bool:
    """Update the patience counter; True when training should stop."""
    if state.ema_loss is None or state.best_loss is None:
        return False
    if state.best_loss - state.ema_loss > config.min_rel_improvement * abs(state.best_loss):
        state.best_loss = state.ema_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
    return state.bad_epochs >= config.patience


def _images(dataset: Union[SceneDataset, Sequence[ImageArray]]) -> List[ImageArray]:
    if isinstance(dataset, SceneDataset):
        return dataset.images
    return list(dataset)


def train(
    dataset: Union[SceneDataset, Sequence[ImageArray]],
    cfg: RunConfig,
    out_dir: Optional[Path] = None,
    state: Optional[TrainingState] = None,
    step_fn: StepFn = train_step,
) -> TrainResult:
    """Train until ``train.max_steps`` or early stopping.

    Args:
        dataset: Unlabeled training images
        cfg: Resolved run configuration
        out_dir: Directory for checkpoints, the metrics log, the epoch summary and the config echo
        state: State to continue from (e.g. loaded with ``load_state``)
        step_fn: Step function, replaceable for testing

    Returns:
        TrainResult with the final state and written paths

    Raises:
        ValueError: If the dataset is empty
        GeostableError: If checkpoints or the log cannot be written
    """
    images = _images(dataset)
    if not images:
        raise ValueError("Training needs a nonempty dataset")
    settings = TrainSettings.from_run_config(cfg)
    config = settings.training
    state = state or initial_state(settings)

    log: Optional[MetricsLog] = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        cfg.write_echo(out_dir)
        log = MetricsLog(out_dir / METRICS_LOG, deterministic=config.num_workers == 1)

    producer: Optional[PairProducer] = None
    if config.num_workers > 1:
        producer = PairProducer(
            images, settings.warp, settings.photometric, config.image_size,
            config.num_workers, config.queue_size, int(state.rng.integers(2**63 - 1)),
        ).start()
        producer.submit(state.epoch_order[state.position:])

    start = time.perf_counter()
    stopped_early = False
    try:
        while state.step < config.max_steps:
            if state.position >= len(state.epoch_order):
                if state.epoch_order:
                    state.epoch += 1
                    if _end_epoch(state, config):
                        logger.info(
                            "Early stop after epoch %d at step %d (smoothed loss %.6f)",
                            state.epoch, state.step, state.ema_loss,
                        )
                        stopped_early = True
                        break
                state.epoch_order = [int(i) for i in state.rng.permutation(len(images))]
                state.position = 0
                if producer is not None:
                    producer.submit(state.epoch_order)

            chunk = state.epoch_order[state.position:state.position + config.batch_size]
            state.position += len(chunk)
            if producer is not None:
                metrics = train_on_pairs(state, [producer.get() for _ in chunk], settings)
            else:
                metrics = step_fn(state, [images[i] for i in chunk], settings)

            if log is not None:
                log.append(metrics, time.perf_counter() - start, epoch=state.epoch)
            if metrics.step % 100 == 0:
                logger.info("step %d loss %.6f", metrics.step, metrics.loss)
            every = config.checkpoint_every
            if out_dir is not None and every and state.step % every == 0:
                save_state(out_dir / f"checkpoint_{state.step:06d}.pt", state, cfg)
    finally:
        if producer is not None:
            producer.close()

    checkpoint: Optional[Path] = None
    if out_dir is not None and log is not None:
        checkpoint = save_state(out_dir / FINAL_CHECKPOINT, state, cfg)
        log.write_epoch_means(out_dir / EPOCH_SUMMARY)
    return TrainResult(
        state=state,
        checkpoint=checkpoint,
        metrics_path=log.path if log is not None else None,
        stopped_early=stopped_early,
    )
