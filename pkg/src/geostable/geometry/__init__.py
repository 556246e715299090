"""
Geometry module.

Random affine warps, mirror-padded bilinear resampling and colour jitter: the
synthetic supervision signal for self-supervised descriptor learning.

Key components:
- AffineWarp with compose / invert / transform_points
- sample_affine_warp: zoom-biased random warps kept inside the padded canvas
- mirror_pad / apply_warp: inverse warping with mirror-padded reads
- PhotometricTransform: brightness, contrast, saturation and hue jitter
- make_warp_pair: two independently warped copies of one image plus their point map
- KeypointSet: named landmarks with an object box, transferable under warps
"""

from .warps import (
    AffineWarp,
    about_center,
    compose,
    frame_corners,
    identity,
    invert,
    padded_bounds,
    rotation,
    sample_affine_warp,
    scaling,
    transform_points,
    translation,
)
from .imaging import (
    ImageArray,
    apply_warp,
    check_image,
    from_uint8,
    mirror_pad,
    pixel_centers,
    sample_bilinear,
    to_uint8,
    warp_mask,
)
from .photometric import PhotometricTransform, sample_photometric
from .pairs import WarpPairSample, make_warp_pair, pair_from_warps, render_pair
from .keypoints import Box, KeypointSet, mask_box, warp_box

__all__ = [
    "AffineWarp",
    "about_center",
    "compose",
    "frame_corners",
    "identity",
    "invert",
    "padded_bounds",
    "rotation",
    "sample_affine_warp",
    "scaling",
    "transform_points",
    "translation",
    "ImageArray",
    "apply_warp",
    "check_image",
    "from_uint8",
    "mirror_pad",
    "pixel_centers",
    "sample_bilinear",
    "to_uint8",
    "warp_mask",
    "PhotometricTransform",
    "sample_photometric",
    "WarpPairSample",
    "make_warp_pair",
    "pair_from_warps",
    "render_pair",
    "Box",
    "KeypointSet",
    "mask_box",
    "warp_box",
]
