"""
Training state and checkpoints.

A TrainingState owns everything that evolves during training: the network,
the optimizer with its accumulators, the numpy random source used for warps
and pair sampling, the step counter, running loss statistics and the position
in the current epoch. Saving and restoring it is exact, so a resumed run
continues the loss trajectory bit-for-bit in single-worker mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import torch

from geostable.config import (
    BackboneConfig,
    PhotometricConfig,
    RunConfig,
    TrainingConfig,
    WarpConfig,
)
from geostable.exceptions import CheckpointError
from geostable.model.net import DescriptorNet, build_descriptor_net
from geostable.trainer.optimizer import build_optimizer
from geostable.utils.serialization import load_checkpoint, save_checkpoint, serialize_checkpoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSettings:
    """Typed views of the run config that a training step needs."""
    training: TrainingConfig
    warp: WarpConfig
    photometric: PhotometricConfig
    backbone: BackboneConfig

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "TrainSettings":
        return cls(
            training=TrainingConfig.from_run_config(cfg),
            warp=WarpConfig.from_run_config(cfg),
            photometric=PhotometricConfig.from_run_config(cfg),
            backbone=BackboneConfig.from_run_config(cfg),
        )


@dataclass
class TrainingState:
    """Mutable state of one training run.

    Attributes:
        net: Descriptor network being trained
        optimizer: Optimizer over ``net``
        rng: Random source for warps, pair sampling and epoch order
        step: Completed steps (skipped degenerate steps included)
        skipped: Steps skipped because every pair was degenerate
        ema_loss: Exponential moving average of the step loss
        best_loss: Best smoothed loss seen at an epoch boundary
        bad_epochs: Consecutive epochs without relative improvement
        epoch: Current epoch index
        epoch_order: Image order of the current epoch
        position: Next index into ``epoch_order``
    """
    net: DescriptorNet
    optimizer: torch.optim.Optimizer
    rng: np.random.Generator
    step: int = 0
    skipped: int = 0
    ema_loss: Optional[float] = None
    best_loss: Optional[float] = None
    bad_epochs: int = 0
    epoch: int = 0
    epoch_order: List[int] = field(default_factory=list)
    position: int = 0

    def statistics(self) -> Dict[str, Any]:
        """JSON-compatible running statistics and RNG state."""
        return {
            "skipped": self.skipped,
            "ema_loss": self.ema_loss,
            "best_loss": self.best_loss,
            "bad_epochs": self.bad_epochs,
            "epoch": self.epoch,
            "epoch_order": list(self.epoch_order),
            "position": self.position,
            "rng": self.rng.bit_generator.state,
        }

    def update_loss(self, loss: float, smoothing: float) -> float:
        """Fold *loss* into the moving average and return it."""
        if self.ema_loss is None:
            self.ema_loss = loss
        else:
            self.ema_loss = smoothing * self.ema_loss + (1.0 - smoothing) * loss
        if self.best_loss is None:
            self.best_loss = self.ema_loss
        return self.ema_loss


def initial_state(settings: TrainSettings) -> TrainingState:
    """Fresh network, optimizer and random source for ``settings``."""
    net = build_descriptor_net(settings.backbone)
    optimizer = build_optimizer(net, settings.training)
    return TrainingState(net, optimizer, np.random.default_rng(settings.training.seed))


def save_state(path: Path, state: TrainingState, cfg: RunConfig) -> Path:
    """Write a checkpoint of *state* with the run config echo."""
    container = serialize_checkpoint(
        parameters=state.net.state_dict(),
        optimizer=state.optimizer.state_dict(),
        config=cfg.to_dict(),
        step=state.step,
        state=state.statistics(),
        torch_rng=torch.get_rng_state(),
    )
    written = save_checkpoint(path, container)
    logger.info("Saved checkpoint at step %d to %s", state.step, written)
    return written


def load_state(path: Path) -> tuple[TrainingState, RunConfig]:
    """Rebuild the training state and its run config from a checkpoint.

    Raises:
        CheckpointError: If the checkpoint is unreadable or does not fit its own config
        VersionMismatchError: If the checkpoint format version differs
    """
    data = load_checkpoint(path)
    cfg = RunConfig.from_dict(data["config"])
    state = initial_state(TrainSettings.from_run_config(cfg))
    try:
        state.net.load_state_dict(data["parameters"])
        state.optimizer.load_state_dict(data["optimizer"])
    except (RuntimeError, ValueError, KeyError) as e:
        raise CheckpointError(f"Checkpoint '{path}' does not match its configuration: {e}") from e

    stats = data["state"]
    state.step = int(data["step"])
    state.skipped = int(stats.get("skipped", 0))
    state.ema_loss = stats.get("ema_loss")
    state.best_loss = stats.get("best_loss")
    state.bad_epochs = int(stats.get("bad_epochs", 0))
    state.epoch = int(stats.get("epoch", 0))
    state.epoch_order = [int(i) for i in stats.get("epoch_order", [])]
    state.position = int(stats.get("position", 0))
    if "rng" in stats:
        state.rng.bit_generator.state = stats["rng"]
    if isinstance(data.get("torch_rng"), torch.Tensor):
        torch.set_rng_state(data["torch_rng"])
    return state, cfg


def load_net(path: Path) -> tuple[DescriptorNet, RunConfig]:
    """Network of a checkpoint, in eval mode."""
    state, cfg = load_state(path)
    return state.net.eval(), cfg
