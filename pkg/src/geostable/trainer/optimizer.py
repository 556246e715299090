"""
Optimizers for descriptor training.

``adagrad_momentum`` keeps a per-parameter AdaGrad accumulator of squared
gradients and applies heavy-ball momentum to the adapted step::

    acc <- acc + g^2
    v   <- momentum * v + g / (sqrt(acc) + eps)
    p   <- p - lr * v

with ``g`` including the L2 weight-decay term. Weight decay is set per
parameter group; the confidence head's bias sits in a group without it.
"""

from __future__ import annotations

from typing import Any, Callable, Dict, Iterable, List, Optional

import torch
from torch import nn
from typing_extensions import override

from geostable.config import OPTIMIZER_KINDS, TrainingConfig
from geostable.model.net import CONFIDENCE_BIAS


class MomentumAdagrad(torch.optim.Optimizer):
    """AdaGrad accumulator with heavy-ball momentum."""

    def __init__(
        self,
        params: Iterable[Any],
        lr: float = 1e-3,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
        eps: float = 1e-10,
    ) -> None:
        if lr <= 0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"Invalid momentum: {momentum}")
        if weight_decay < 0:
            raise ValueError(f"Invalid weight decay: {weight_decay}")
        defaults = dict(lr=lr, momentum=momentum, weight_decay=weight_decay, eps=eps)
        super().__init__(params, defaults)

    @override
    @torch.no_grad()
    def step(  # type: ignore[override]
        self, closure: Optional[Callable[[], float]] = None
    ) -> Optional[float]:
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if group["weight_decay"]:
                    grad = grad.add(p, alpha=group["weight_decay"])

                state = self.state[p]
                if not state:
                    state["sum"] = torch.zeros_like(p)
                    state["momentum_buffer"] = torch.zeros_like(p)
                state["sum"].addcmul_(grad, grad)
                adapted = grad / (state["sum"].sqrt() + group["eps"])
                buf = state["momentum_buffer"]
                buf.mul_(group["momentum"]).add_(adapted)
                p.add_(buf, alpha=-group["lr"])
        return loss


def parameter_groups(model: nn.Module, weight_decay: float) -> List[Dict[str, Any]]:
    """Two groups: everything with ``weight_decay``, the confidence bias without."""
    decay, exempt = [], []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        (exempt if name == CONFIDENCE_BIAS else decay).append(param)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": exempt, "weight_decay": 0.0},
    ]


def build_optimizer(model: nn.Module, config: TrainingConfig) -> torch.optim.Optimizer:
    """Optimizer of kind ``config.optimizer`` over the model's parameter groups.

    Raises:
        ValueError: On an unknown optimizer kind
    """
    groups = parameter_groups(model, config.weight_decay)
    if config.optimizer == "adagrad_momentum":
        return MomentumAdagrad(groups, lr=config.learning_rate, momentum=config.momentum)
    if config.optimizer == "adagrad":
        return torch.optim.Adagrad(groups, lr=config.learning_rate)
    if config.optimizer == "sgd":
        return torch.optim.SGD(groups, lr=config.learning_rate, momentum=config.momentum)
    raise ValueError(
        f"Unknown optimizer '{config.optimizer}'; valid values: {', '.join(OPTIMIZER_KINDS)}"
    )
