"""Feature-grid frames: mapping between grid cells and input-image pixels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt


@dataclass(frozen=True)
class FrameSpec:
    """An image frame and the feature grid laid over it.

    Cell ``(i, j)`` (row, column) has its pixel centre at
    ``(x, y) = (stride * j + stride / 2, stride * i + stride / 2)``.

    Attributes:
        height: Image height in pixels
        width: Image width in pixels
        stride: Pixels per grid cell
    """
    height: int
    width: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0 or self.stride <= 0:
            raise ValueError(f"Frame dimensions and stride must be positive: {self}")

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.height // self.stride, self.width // self.stride

    def cell_centers(self) -> npt.NDArray[np.float64]:
        """``(H' * W', 2)`` pixel centres of all cells, row-major."""
        rows, cols = self.grid_shape
        ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        half = self.stride / 2.0
        return np.stack([jj.ravel() * self.stride + half, ii.ravel() * self.stride + half], axis=1)

    def cell_of(self, flat_index: npt.ArrayLike) -> npt.NDArray[np.int64]:
        """``(N, 2)`` ``(row, col)`` cells for row-major flat indices."""
        flat = np.asarray(flat_index, dtype=np.int64)
        return np.stack(np.divmod(flat, self.grid_shape[1]), axis=-1)

    def contains(self, points: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        """Whether each ``(x, y)`` point lies inside ``[0, width) x [0, height)``."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (
            (pts[:, 0] >= 0.0) & (pts[:, 0] < self.width)
            & (pts[:, 1] >= 0.0) & (pts[:, 1] < self.height)
        )

    def to_grid(self, points: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Continuous grid coordinates ``(gx, gy)``; cell centres land on integers."""
        pts = np.asarray(points, dtype=np.float64)
        return pts / self.stride - 0.5

    def to_pixels(self, grid_points: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Inverse of ``to_grid``."""
        return (np.asarray(grid_points, dtype=np.float64) + 0.5) * self.stride
