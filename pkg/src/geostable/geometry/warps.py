"""
Invertible 2D affine warps.

Points are ``(x, y)`` in continuous pixel coordinates: pixel ``(row, col)`` covers
``[col, col + 1) x [row, row + 1)`` and has its centre at ``(col + 0.5, row + 0.5)``.
A warp maps a point ``u`` to ``linear @ u + translation``.

Composition follows function composition: ``compose(w2, w1)(u) == w2(w1(u))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence

import numpy as np
import numpy.typing as npt

from geostable.config import WarpConfig
from geostable.exceptions import NonInvertibleWarpError, WarpSamplingError

# |det| at or below this is treated as singular
MIN_DETERMINANT = 1e-6

Points = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class AffineWarp:
    """An affine map ``u -> linear @ u + translation``.

    Attributes:
        linear: 2x2 matrix (unitless)
        translation: 2-vector in pixels
    """
    linear: npt.NDArray[np.float64] = field(default_factory=lambda: np.eye(2))
    translation: npt.NDArray[np.float64] = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self) -> None:
        linear = np.asarray(self.linear, dtype=np.float64).reshape(2, 2)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(2)
        linear.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "translation", translation)

    @property
    def determinant(self) -> float:
        return float(self.linear[0, 0] * self.linear[1, 1] - self.linear[0, 1] * self.linear[1, 0])

    @property
    def is_invertible(self) -> bool:
        return abs(self.determinant) > MIN_DETERMINANT

    def __call__(self, points: Sequence[Sequence[float]] | Points) -> Points:
        return transform_points(points, self)

    def as_matrix(self) -> npt.NDArray[np.float64]:
        """Homogeneous 3x3 matrix."""
        matrix = np.eye(3)
        matrix[:2, :2] = self.linear
        matrix[:2, 2] = self.translation
        return matrix

    def allclose(self, other: "AffineWarp", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.linear, other.linear, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {"linear": self.linear.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AffineWarp":
        """Create from dictionary representation."""
        return cls(linear=np.array(data["linear"]), translation=np.array(data["translation"]))

    def __repr__(self) -> str:
        a = self.linear
        t = self.translation
        return (
            f"AffineWarp(linear=[[{a[0, 0]:.4g}, {a[0, 1]:.4g}], [{a[1, 0]:.4g}, {a[1, 1]:.4g}]], "
            f"translation=[{t[0]:.4g}, {t[1]:.4g}])"
        )


def identity() -> AffineWarp:
    return AffineWarp()


def translation(dx: float, dy: float) -> AffineWarp:
    return AffineWarp(np.eye(2), np.array([dx, dy]))


def scaling(sx: float, sy: float | None = None) -> AffineWarp:
    return AffineWarp(np.diag([sx, sx if sy is None else sy]), np.zeros(2))


def about_center(linear: npt.ArrayLike, center: Sequence[float]) -> AffineWarp:
    """Warp applying *linear* around *center* (the centre is a fixed point)."""
    a = np.asarray(linear, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    return AffineWarp(a, c - a @ c)


def rotation(degrees: float, center: Sequence[float] = (0.0, 0.0)) -> AffineWarp:
    """Rotation by *degrees*; positive angles turn clockwise on screen (y points down)."""
    quarter, rem = divmod(degrees, 90.0)
    if rem == 0.0:
        # exact matrices for multiples of 90 degrees
        c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][int(quarter) % 4]
    else:
        theta = math.radians(degrees)
        c, s = math.cos(theta), math.sin(theta)
    return about_center([[c, -s], [s, c]], center)


def compose(second: AffineWarp, first: AffineWarp) -> AffineWarp:
    """Return the warp ``u -> second(first(u))``."""
    return AffineWarp(
        second.linear @ first.linear,
        second.linear @ first.translation + second.translation,
    )


def invert(warp: AffineWarp) -> AffineWarp:
    """Return the inverse warp.

    Raises:
        NonInvertibleWarpError: If |det| <= 1e-6
    """
    det = warp.determinant
    if abs(det) <= MIN_DETERMINANT:
        raise NonInvertibleWarpError(f"Warp is not invertible (det={det:.3g}): {warp!r}")
    (a, b), (c, d) = warp.linear
    inv = np.array([[d, -b], [-c, a]]) / det
    return AffineWarp(inv, -(inv @ warp.translation))


def transform_points(points: Sequence[Sequence[float]] | Points, warp: AffineWarp) -> Points:
    """Apply *warp* to an ``(N, 2)`` array of points (exact affine evaluation, no clamping)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 2)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    out = pts @ warp.linear.T + warp.translation
    return out[0] if single else out


def frame_corners(height: float, width: float) -> Points:
    """The four corners of a ``height x width`` frame."""
    return np.array([[0.0, 0.0], [width, 0.0], [0.0, height], [width, height]])


def padded_bounds(height: float, width: float) -> tuple[float, float, float, float]:
    """Bounds ``(xmin, ymin, xmax, ymax)`` of the mirror-padded canvas around a frame.

    The canvas is twice the frame in each direction, centred on it, matching
    ``geometry.imaging.mirror_pad``.
    """
    top = height // 2
    left = width // 2
    return (-float(left), -float(top), float(2 * width - left), float(2 * height - top))


def _corners_inside_canvas(warp: AffineWarp, height: int, width: int) -> bool:
    xmin, ymin, xmax, ymax = padded_bounds(height, width)
    src = transform_points(frame_corners(height, width), invert(warp))
    return bool(
        np.all(src[:, 0] >= xmin) and np.all(src[:, 0] <= xmax)
        and np.all(src[:, 1] >= ymin) and np.all(src[:, 1] <= ymax)
    )


def sample_affine_warp(
    rng: np.random.Generator,
    config: WarpConfig,
    height: int,
    width: int,
) -> AffineWarp:
    """Draw a random zoom-biased affine warp of a ``height x width`` frame.

    The linear part is ``R(theta) @ Shear(kappa) @ diag(sx, sy)`` with
    ``sx, sy >= 1`` so the output frame always shows at most the original frame
    area, i.e. the view zooms into the mirror-padded canvas. The warp is applied
    about the frame centre after a translation of up to ``config.translation``
    times the padded size. Samples whose output-frame corners would read outside
    the padded canvas are rejected.

    Args:
        rng: Random source owned by the caller
        config: Sampling ranges
        height: Frame height in pixels
        width: Frame width in pixels

    Returns:
        The sampled warp (source frame -> output frame)

    Raises:
        WarpSamplingError: If no valid warp is found within ``config.max_retries`` draws
    """
    center = np.array([width / 2.0, height / 2.0])
    padded = np.array([2.0 * width, 2.0 * height])
    max_angle = math.radians(config.rotation_deg)

    for _ in range(config.max_retries):
        theta = rng.uniform(-max_angle, max_angle)
        kappa = rng.uniform(-config.shear, config.shear)
        sx, sy = rng.uniform(config.scale_min, config.scale_max, size=2)
        shift = rng.uniform(-config.translation, config.translation, size=2) * padded

        c, s = math.cos(theta), math.sin(theta)
        shear = np.array([[1.0, kappa], [0.0, 1.0]])
        linear = np.array([[c, -s], [s, c]]) @ shear @ np.diag([sx, sy])
        # u -> center + A (u - center - shift)
        warp = AffineWarp(linear, center - linear @ (center + shift))

        if warp.is_invertible and _corners_inside_canvas(warp, height, width):
            return warp

    raise WarpSamplingError(
        f"No valid warp after {config.max_retries} draws for a {height}x{width} frame; "
        f"config is over-constrained: {config}"
    )
