"""
The dense descriptor network.

A trunk produces features at stride ``s``; two 1x1 projections turn them into
``C`` raw embedding channels and one raw confidence channel. Embeddings are
L2-normalized per location and the confidence becomes
``sigma = softplus(raw) + epsilon``.
"""

from __future__ import annotations

import copy
import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt
import torch
import torch.nn.functional as F
from torch import nn
from typing_extensions import override

from geostable.config import BackboneConfig
from geostable.geometry.imaging import check_image
from geostable.model.backbone import BackboneContract, build_tiny_backbone
from geostable.model.fields import NORM_FLOOR, ConfidenceField, DenseDescriptorField

logger = logging.getLogger(__name__)

CONFIDENCE_BIAS = "confidence.bias"


class NetOutput(NamedTuple):
    """Batched network output.

    Attributes:
        descriptors: ``(B, C, H', W')`` unit descriptors
        sigma: ``(B, H', W')`` inverse confidence
        tap: ``(B, C_t, H_t, W_t)`` intermediate trunk feature, if the trunk has one
    """
    descriptors: torch.Tensor
    sigma: torch.Tensor
    tap: Optional[torch.Tensor]


class DescriptorNet(nn.Module):
    """Backbone plus embedding and confidence heads."""

    def __init__(
        self,
        backbone: BackboneContract,
        descriptor_dim: int = 64,
        epsilon: float = 1e-4,
    ) -> None:
        super().__init__()
        self.backbone = backbone
        self.embed = nn.Conv2d(backbone.out_channels, descriptor_dim, kernel_size=1)
        self.confidence = nn.Conv2d(backbone.out_channels, 1, kernel_size=1)
        self.descriptor_dim = descriptor_dim
        self.epsilon = epsilon

    @property
    def stride(self) -> int:
        return int(self.backbone.stride)

    @property
    def tap_stride(self) -> int:
        return int(self.backbone.tap_stride)

    def check_input(self, images: torch.Tensor) -> None:
        """Raise ``ValueError`` unless ``images`` is ``(B, 3, H, W)`` tiled by the stride."""
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"Expected a (B, 3, H, W) batch, got {tuple(images.shape)}")
        height, width = images.shape[-2:]
        if height % self.stride or width % self.stride:
            raise ValueError(
                f"Image size {height}x{width} is not a multiple of stride {self.stride}"
            )

    def normalize(self, raw: torch.Tensor) -> torch.Tensor:
        """Unit-normalize along channels; exact zero vectors become the first basis vector."""
        norms = raw.norm(dim=1, keepdim=True)
        zero = norms <= NORM_FLOOR
        if bool(zero.any()):
            logger.warning("Repairing %d zero-norm descriptors", int(zero.sum()))
            basis = torch.zeros_like(raw)
            basis[:, 0] = self.epsilon
            raw = torch.where(zero, raw + basis, raw)
        return F.normalize(raw, dim=1, eps=NORM_FLOOR)

    @override
    def forward(self, images: torch.Tensor) -> NetOutput:
        self.check_input(images)
        features, tap = self.backbone(images)
        descriptors = self.normalize(self.embed(features))
        sigma = F.softplus(self.confidence(features))[:, 0] + self.epsilon
        return NetOutput(descriptors, sigma, tap)


def build_descriptor_net(config: Optional[BackboneConfig] = None) -> DescriptorNet:
    """DescriptorNet on a TinyBackbone; same config gives bit-identical weights."""
    config = config or BackboneConfig()
    backbone = build_tiny_backbone(config)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed + 1)
        return DescriptorNet(backbone, config.descriptor_dim, config.epsilon)


def image_to_tensor(image: npt.ArrayLike) -> torch.Tensor:
    """``(H, W, 3)`` image in [0, 1] to a ``(1, 3, H, W)`` float32 batch."""
    img = check_image(image)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1), dtype=np.float32))[None]


def images_to_tensor(images: list[npt.NDArray[np.float64]]) -> torch.Tensor:
    return torch.cat([image_to_tensor(image) for image in images], dim=0)


def output_fields(
    output: NetOutput,
    net: DescriptorNet,
    index: int = 0,
) -> Tuple[DenseDescriptorField, ConfidenceField]:
    """Fields of one batch element."""
    tap = output.tap[index] if output.tap is not None else None
    field = DenseDescriptorField(output.descriptors[index], net.stride, tap, net.tap_stride)
    return field, ConfidenceField(output.sigma[index], net.stride)


def describe(
    net: DescriptorNet, image: npt.ArrayLike
) -> Tuple[DenseDescriptorField, ConfidenceField]:
    """Fields of one image, without gradients."""
    with torch.no_grad():
        return output_fields(net(image_to_tensor(image)), net)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def snapshot(net: DescriptorNet) -> DescriptorNet:
    """Read-only evaluation copy: eval mode, gradients disabled."""
    frozen = copy.deepcopy(net).eval()
    frozen.requires_grad_(False)
    return frozen
