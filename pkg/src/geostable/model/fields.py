"""
Dense fields produced by the descriptor network and bilinear reads from them.

Fields are laid out channel-first on a grid with a fixed stride; cell
``(i, j)`` is centred on pixel ``(x, y) = (stride * j + stride / 2, stride * i + stride / 2)``.
Reads at arbitrary pixels interpolate the four surrounding cells and clamp
outside the border cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
import torch
import torch.nn.functional as F

from geostable.correspondence.frames import FrameSpec

NORM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class DenseDescriptorField:
    """Unit descriptors on a feature grid.

    Attributes:
        descriptors: ``(C, H', W')`` tensor, unit norm along ``C``
        stride: Pixels per grid cell
        tap: Optional ``(C_t, H_t, W_t)`` intermediate backbone feature
        tap_stride: Pixels per cell of ``tap``
    """
    descriptors: torch.Tensor
    stride: int
    tap: Optional[torch.Tensor] = None
    tap_stride: int = 1

    @property
    def dim(self) -> int:
        return int(self.descriptors.shape[0])

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return int(self.descriptors.shape[1]), int(self.descriptors.shape[2])

    @property
    def frame(self) -> FrameSpec:
        rows, cols = self.grid_shape
        return FrameSpec(rows * self.stride, cols * self.stride, self.stride)

    def flat(self) -> torch.Tensor:
        """``(H' * W', C)`` descriptors in row-major cell order."""
        return self.descriptors.reshape(self.dim, -1).T


@dataclass(frozen=True, eq=False)
class ConfidenceField:
    """Inverse confidence ``sigma >= epsilon`` on the descriptor grid."""
    sigma: torch.Tensor
    stride: int

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return int(self.sigma.shape[0]), int(self.sigma.shape[1])


def _sampling_grid(
    points: npt.ArrayLike | torch.Tensor,
    grid_shape: Tuple[int, int],
    stride: int,
    like: torch.Tensor,
) -> torch.Tensor:
    if not isinstance(points, torch.Tensor):
        points = torch.as_tensor(np.asarray(points, dtype=np.float64))
    pts = points.to(device=like.device, dtype=like.dtype).reshape(-1, 2)
    rows, cols = grid_shape
    gx = pts[:, 0] / stride - 0.5
    gy = pts[:, 1] / stride - 0.5
    nx = 2.0 * gx / (cols - 1) - 1.0 if cols > 1 else torch.zeros_like(gx)
    ny = 2.0 * gy / (rows - 1) - 1.0 if rows > 1 else torch.zeros_like(gy)
    return torch.stack([nx, ny], dim=-1).view(1, 1, -1, 2)


def sample_grid(
    values: torch.Tensor,
    points: npt.ArrayLike | torch.Tensor,
    stride: int,
) -> torch.Tensor:
    """Bilinear read of a ``(C, H, W)`` grid at ``(n, 2)`` pixel points; returns ``(n, C)``."""
    grid = _sampling_grid(points, (values.shape[1], values.shape[2]), stride, values)
    out = F.grid_sample(
        values.unsqueeze(0), grid, mode="bilinear", padding_mode="border", align_corners=True
    )
    return out[0, :, 0, :].T


def descriptors_at(
    field: DenseDescriptorField,
    points: npt.ArrayLike | torch.Tensor,
) -> torch.Tensor:
    """``(n, C)`` unit descriptors at pixel points; differentiable in the field."""
    return F.normalize(sample_grid(field.descriptors, points, field.stride), dim=1, eps=NORM_FLOOR)


def descriptor_at(field: DenseDescriptorField, pixel: npt.ArrayLike) -> torch.Tensor:
    """Unit descriptor at one pixel ``(x, y)``."""
    return descriptors_at(field, np.asarray(pixel, dtype=np.float64).reshape(1, 2))[0]


def sigma_at(confidence: ConfidenceField, points: npt.ArrayLike | torch.Tensor) -> torch.Tensor:
    """``(n,)`` inverse confidences at pixel points."""
    return sample_grid(confidence.sigma.unsqueeze(0), points, confidence.stride)[:, 0]
