"""
Trainer module.

Self-supervised training of the descriptor network from warp pairs: the
optimizer, training state and checkpoints, parallel pair generation, the step
function and the epoch loop with early stopping.
"""

from .optimizer import MomentumAdagrad, build_optimizer, parameter_groups
from .state import TrainingState, TrainSettings, initial_state, load_net, load_state, save_state
from .metrics import METRIC_FIELDS, MetricsLog, StepMetrics
from .workers import PairProducer, TrainingPair, render_training_pair
from .loop import (
    EPOCH_SUMMARY,
    FINAL_CHECKPOINT,
    METRICS_LOG,
    TrainResult,
    pair_objective,
    train,
    train_on_pairs,
    train_step,
)

__all__ = [
    "MomentumAdagrad",
    "build_optimizer",
    "parameter_groups",
    "TrainingState",
    "TrainSettings",
    "initial_state",
    "load_net",
    "load_state",
    "save_state",
    "METRIC_FIELDS",
    "MetricsLog",
    "StepMetrics",
    "PairProducer",
    "TrainingPair",
    "render_training_pair",
    "EPOCH_SUMMARY",
    "FINAL_CHECKPOINT",
    "METRICS_LOG",
    "TrainResult",
    "pair_objective",
    "train",
    "train_on_pairs",
    "train_step",
]
