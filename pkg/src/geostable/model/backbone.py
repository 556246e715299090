"""
Backbone interface and the small built-in convolutional trunk.

The BackboneContract protocol is what DescriptorNet needs from a trunk: a
fully convolutional map from ``(B, 3, H, W)`` images to ``(B, D, H/s, W/s)``
features, plus an optional intermediate feature map (the tap) used by the
evaluation features. TinyBackbone is the desk-scale implementation.
"""

from __future__ import annotations

import math
from typing import Optional, Protocol, Tuple

import torch
from torch import nn
from typing_extensions import override

from geostable.config import BackboneConfig


class BackboneContract(Protocol):
    """Protocol for descriptor-network trunks.

    Output spatial dims must be the input dims divided by ``stride``.
    """

    stride: int
    out_channels: int
    tap_channels: Optional[int]
    tap_stride: int

    def __call__(self, images: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """Map ``(B, 3, H, W)`` images to ``(features, tap)``."""
        ...


class TinyBackbone(nn.Module):
    """Stack of 3x3 conv + ReLU blocks; the output of block ``tap_index`` is exposed as the tap."""

    def __init__(
        self,
        widths: Tuple[int, ...],
        strides: Tuple[int, ...],
        tap_index: Optional[int] = None,
    ) -> None:
        super().__init__()
        if len(widths) != len(strides) or not widths:
            raise ValueError(f"widths {widths} and strides {strides} must be nonempty and aligned")
        if tap_index is not None and not 0 <= tap_index < len(widths):
            raise ValueError(f"tap_index {tap_index} out of range for {len(widths)} blocks")

        blocks = []
        in_channels = 3
        for width, stride in zip(widths, strides):
            blocks.append(nn.Sequential(
                nn.Conv2d(in_channels, width, kernel_size=3, stride=stride, padding=1),
                nn.ReLU(inplace=True),
            ))
            in_channels = width
        self.blocks = nn.ModuleList(blocks)
        self.tap_index = tap_index
        self.stride = math.prod(strides)
        self.out_channels = widths[-1]
        self.tap_channels = widths[tap_index] if tap_index is not None else None
        self.tap_stride = (
            math.prod(strides[: tap_index + 1]) if tap_index is not None else self.stride
        )

    @override
    def forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        tap = None
        x = images
        for index, block in enumerate(self.blocks):
            x = block(x)
            if index == self.tap_index:
                tap = x
        return x, tap


def build_tiny_backbone(config: BackboneConfig) -> TinyBackbone:
    """TinyBackbone from the config; initialization is a function of ``config.seed`` alone."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return TinyBackbone(config.widths, config.strides, config.tap_index)
