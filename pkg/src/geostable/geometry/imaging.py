"""
Image resampling under affine warps.

Images are float arrays with values in [0, 1], shaped ``(H, W, 3)`` (masks and
single-channel maps may be ``(H, W)``). Warping is inverse warping: the output
pixel at ``v`` is the bilinear sample of the input at ``invert(warp)(v)``.
Reads outside the image come from the mirror-padded canvas.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import ndimage

from geostable.geometry.warps import AffineWarp, invert, transform_points

ImageArray = npt.NDArray[np.float64]


def check_image(image: npt.ArrayLike) -> ImageArray:
    """Return *image* as a float64 array, validating shape and value range.

    Raises:
        ValueError: If the image is empty, has the wrong rank or values outside [0, 1]
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim not in (2, 3) or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"Expected a nonempty (H, W) or (H, W, C) image, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"Image values must lie in [0, 1], got [{arr.min():.3g}, {arr.max():.3g}]")
    return arr


def pad_widths(height: int, width: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Rows/cols added on each side to grow a frame to ``2H x 2W``."""
    top, left = height // 2, width // 2
    return (top, height - top), (left, width - left)


def mirror_pad(image: npt.ArrayLike) -> ImageArray:
    """Mirror-pad an image to twice its size, keeping it centred.

    Reflection excludes the border pixel itself, so ``pad(i, -k) == pad(i, k)``
    about every original border.

    Args:
        image: ``(H, W)`` or ``(H, W, C)`` array

    Returns:
        ``(2H, 2W[, C])`` array
    """
    arr = check_image(image)
    rows, cols = pad_widths(arr.shape[0], arr.shape[1])
    widths = [rows, cols] + [(0, 0)] * (arr.ndim - 2)
    if min(arr.shape[:2]) == 1:
        # a single row/column has nothing to reflect
        return np.pad(arr, widths, mode="edge")
    return np.pad(arr, widths, mode="reflect")


def pixel_centers(height: int, width: int) -> npt.NDArray[np.float64]:
    """``(H*W, 2)`` array of pixel-centre points ``(x, y)`` in row-major order."""
    ys, xs = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def sample_bilinear(image: npt.ArrayLike, points: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Bilinear samples of *image* at continuous points ``(x, y)``, mirror-extended outside.

    Returns:
        ``(N,)`` or ``(N, C)`` array
    """
    arr = check_image(image)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    canvas = mirror_pad(arr)
    (top, _), (left, _) = pad_widths(arr.shape[0], arr.shape[1])
    coords = np.stack([pts[:, 1] - 0.5 + top, pts[:, 0] - 0.5 + left])

    if canvas.ndim == 2:
        return ndimage.map_coordinates(canvas, coords, order=1, mode="mirror")
    return np.stack(
        [ndimage.map_coordinates(canvas[..., c], coords, order=1, mode="mirror")
         for c in range(canvas.shape[2])],
        axis=1,
    )


def apply_warp(
    image: npt.ArrayLike,
    warp: AffineWarp,
    out_shape: Optional[Tuple[int, int]] = None,
) -> ImageArray:
    """Inverse-warp *image*: ``out(v) = image(invert(warp)(v))`` with bilinear interpolation.

    Args:
        image: Source image, ``(H, W)`` or ``(H, W, C)``
        warp: Map from source coordinates to output coordinates
        out_shape: Output ``(height, width)``; defaults to the source size

    Returns:
        Warped image with values clamped to [0, 1]

    Raises:
        NonInvertibleWarpError: If the warp cannot be inverted
    """
    arr = check_image(image)
    inverse = invert(warp)
    out_h, out_w = out_shape if out_shape is not None else arr.shape[:2]

    src = transform_points(pixel_centers(out_h, out_w), inverse)
    samples = sample_bilinear(arr, src)
    out = samples.reshape((out_h, out_w) + arr.shape[2:])
    return np.clip(out, 0.0, 1.0)


def warp_mask(
    mask: npt.ArrayLike,
    warp: AffineWarp,
    out_shape: Optional[Tuple[int, int]] = None,
) -> npt.NDArray[np.bool_]:
    """Warp a boolean mask (bilinear resampling thresholded at 0.5)."""
    return apply_warp(np.asarray(mask, dtype=np.float64), warp, out_shape) > 0.5


def to_uint8(image: npt.ArrayLike) -> npt.NDArray[np.uint8]:
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(image: npt.ArrayLike) -> ImageArray:
    return np.asarray(image, dtype=np.float64) / 255.0
