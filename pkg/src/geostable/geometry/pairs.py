"""
Synthetic training pairs.

An unlabeled image is warped twice, by independent random warps, and each copy
gets its own colour jitter. The point map between the two warped images is
``pairwise = warp_b ∘ warp_a⁻¹``: a pixel ``u`` of the first image shows the
same source point as ``pairwise(u)`` in the second.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from geostable.config import PhotometricConfig, WarpConfig
from geostable.geometry.imaging import ImageArray, apply_warp, check_image
from geostable.geometry.photometric import PhotometricTransform, sample_photometric
from geostable.geometry.warps import AffineWarp, compose, invert, sample_affine_warp, scaling


@dataclass(frozen=True, eq=False)
class WarpPairSample:
    """Geometry and colour parameters of one synthetic pair.

    Attributes:
        warp_a: Source frame -> first image (resize to the output size included)
        warp_b: Source frame -> second image
        pairwise: First image -> second image, ``warp_b ∘ warp_a⁻¹``
        color_a: Colour transform of the first image
        color_b: Colour transform of the second image
    """
    warp_a: AffineWarp
    warp_b: AffineWarp
    pairwise: AffineWarp
    color_a: PhotometricTransform
    color_b: PhotometricTransform

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return {
            "warp_a": self.warp_a.to_dict(),
            "warp_b": self.warp_b.to_dict(),
            "pairwise": self.pairwise.to_dict(),
            "color_a": self.color_a.to_dict(),
            "color_b": self.color_b.to_dict(),
        }


def pair_from_warps(
    warp_a: AffineWarp,
    warp_b: AffineWarp,
    color_a: Optional[PhotometricTransform] = None,
    color_b: Optional[PhotometricTransform] = None,
) -> WarpPairSample:
    return WarpPairSample(
        warp_a=warp_a,
        warp_b=warp_b,
        pairwise=compose(warp_b, invert(warp_a)),
        color_a=color_a or PhotometricTransform(),
        color_b=color_b or PhotometricTransform(),
    )


def render_pair(
    image: ImageArray,
    sample: WarpPairSample,
    out_shape: Tuple[int, int],
) -> Tuple[ImageArray, ImageArray]:
    """Render both images of *sample*: geometric warp first, colour transform second."""
    x_a = sample.color_a.apply(apply_warp(image, sample.warp_a, out_shape))
    x_b = sample.color_b.apply(apply_warp(image, sample.warp_b, out_shape))
    return x_a, x_b


def make_warp_pair(
    image: ImageArray,
    rng: np.random.Generator,
    config: WarpConfig,
    photometric: Optional[PhotometricConfig] = None,
    out_size: Optional[Tuple[int, int]] = None,
) -> Tuple[ImageArray, ImageArray, WarpPairSample]:
    """Warp *image* twice into a training pair with known correspondence.

    Args:
        image: Unlabeled ``(H, W, 3)`` image
        rng: Random source owned by the caller
        config: Warp sampling ranges
        photometric: Colour jitter; ``None`` disables it
        out_size: Training resolution ``(height, width)``; defaults to the image size

    Returns:
        ``(x_a, x_b, sample)`` with both images at the training resolution

    Raises:
        WarpSamplingError: If warp sampling fails
    """
    src = check_image(image)
    height, width = src.shape[:2]
    out_h, out_w = out_size if out_size is not None else (height, width)
    resize = scaling(out_w / width, out_h / height)

    g_a = sample_affine_warp(rng, config, height, width)
    g_b = sample_affine_warp(rng, config, height, width)
    photometric = photometric or PhotometricConfig.disabled()
    color_a = sample_photometric(rng, photometric)
    color_b = sample_photometric(rng, photometric)

    sample = pair_from_warps(compose(resize, g_a), compose(resize, g_b), color_a, color_b)
    x_a, x_b = render_pair(src, sample, (out_h, out_w))
    return x_a, x_b, sample
