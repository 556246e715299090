"""Named keypoint annotations and their transfer under warps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd

from geostable.geometry.warps import AffineWarp

Box = Tuple[float, float, float, float]

KEYPOINT_COLUMNS = ["name", "x", "y", "visible"]


def mask_box(mask: npt.ArrayLike) -> Box:
    """Tight ``(x, y, w, h)`` pixel box of a boolean mask.

    Raises:
        ValueError: If the mask is empty
    """
    arr = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(arr.any(axis=1))
    cols = np.flatnonzero(arr.any(axis=0))
    if rows.size == 0:
        raise ValueError("Cannot take the box of an empty mask")
    x0, y0 = float(cols[0]), float(rows[0])
    return (x0, y0, float(cols[-1] + 1) - x0, float(rows[-1] + 1) - y0)


def warp_box(box: Box, warp: AffineWarp) -> Box:
    """Axis-aligned bounds of the warped box corners."""
    x, y, w, h = box
    corners = warp(np.array([[x, y], [x + w, y], [x, y + h], [x + w, y + h]], dtype=np.float64))
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """Keypoints of one object instance.

    Attributes:
        names: Landmark names, shared by every instance of a family
        points: ``(n, 2)`` pixel positions ``(x, y)``
        visible: ``(n,)`` visibility flags
        box: Object box ``(x, y, w, h)`` in pixels
    """
    names: Tuple[str, ...]
    points: npt.NDArray[np.float64]
    visible: npt.NDArray[np.bool_]
    box: Box

    def __post_init__(self) -> None:
        n = len(self.names)
        if self.points.shape != (n, 2) or self.visible.shape != (n,):
            raise ValueError(
                f"{n} names but points {self.points.shape} and visible {self.visible.shape}"
            )
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValueError(f"Box must have positive size, got {self.box}")

    @classmethod
    def create(
        cls,
        names: Sequence[str],
        points: npt.ArrayLike,
        visible: npt.ArrayLike | None = None,
        box: Box = (0.0, 0.0, 1.0, 1.0),
    ) -> "KeypointSet":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        vis = np.ones(len(pts), dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
        return cls(tuple(names), pts, vis, tuple(float(v) for v in box))  # type: ignore[arg-type]

    def __len__(self) -> int:
        return len(self.names)

    @property
    def max_side(self) -> float:
        """``max(w, h)`` of the object box."""
        return max(self.box[2], self.box[3])

    @property
    def visible_count(self) -> int:
        return int(self.visible.sum())

    def visible_points(self) -> npt.NDArray[np.float64]:
        return self.points[self.visible]

    def transformed(self, warp: AffineWarp, height: int, width: int) -> "KeypointSet":
        """Keypoints and box under *warp*; points leaving the frame become invisible."""
        pts = warp(self.points) if len(self) else self.points.copy()
        inside = (pts[:, 0] >= 0) & (pts[:, 0] < width) & (pts[:, 1] >= 0) & (pts[:, 1] < height)
        return KeypointSet(self.names, pts, self.visible & inside, warp_box(self.box, warp))

    def to_frame(self) -> pd.DataFrame:
        """One row per keypoint: ``name x y visible``."""
        return pd.DataFrame({
            "name": list(self.names),
            "x": self.points[:, 0],
            "y": self.points[:, 1],
            "visible": self.visible.astype(int),
        }, columns=KEYPOINT_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, box: Box) -> "KeypointSet":
        """Inverse of ``to_frame``; the box is supplied separately."""
        return cls.create(
            frame["name"].astype(str).tolist(),
            frame[["x", "y"]].to_numpy(dtype=np.float64),
            frame["visible"].to_numpy().astype(int) != 0,
            box,
        )

    def allclose(self, other: "KeypointSet", atol: float = 0.0) -> bool:
        return (
            self.names == other.names
            and np.allclose(self.points, other.points, rtol=0.0, atol=atol)
            and bool(np.array_equal(self.visible, other.visible))
            and np.allclose(self.box, other.box, rtol=0.0, atol=atol)
        )
