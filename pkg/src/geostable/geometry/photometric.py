"""
Random colour transformations applied after the geometric warp.

The jitter follows the SSD-style photometric distortion (brightness, contrast,
saturation, hue) with deliberately strong default magnitudes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from geostable.config import PhotometricConfig
from geostable.geometry.imaging import ImageArray, check_image


@dataclass(frozen=True)
class PhotometricTransform:
    """One colour transform.

    Attributes:
        brightness: Additive shift in [-db, db]
        contrast: Factor in [1 - dc, 1 + dc] applied around the image mean
        saturation: Multiplicative factor on HSV saturation
        hue_deg: Hue rotation in degrees
    """
    brightness: float = 0.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue_deg: float = 0.0

    @property
    def is_identity(self) -> bool:
        identity = (0.0, 1.0, 1.0, 0.0)
        return (self.brightness, self.contrast, self.saturation, self.hue_deg) == identity

    def apply(self, image: ImageArray) -> ImageArray:
        """Apply to an ``(H, W, 3)`` image; shape is preserved and values stay in [0, 1]."""
        img = check_image(image)
        if self.is_identity:
            return img.copy()

        out = img + self.brightness
        mean = out.mean()
        out = np.clip(mean + (out - mean) * self.contrast, 0.0, 1.0)

        if self.saturation != 1.0 or self.hue_deg != 0.0:
            hsv = rgb_to_hsv(out)
            hsv[..., 0] = np.mod(hsv[..., 0] + self.hue_deg / 360.0, 1.0)
            hsv[..., 1] = np.clip(hsv[..., 1] * self.saturation, 0.0, 1.0)
            out = hsv_to_rgb(hsv)

        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhotometricTransform":
        """Create from dictionary representation."""
        return cls(**data)


def sample_photometric(rng: np.random.Generator, config: PhotometricConfig) -> PhotometricTransform:
    """Draw a colour transform; a disabled config yields the identity and draws nothing."""
    if not config.enabled:
        return PhotometricTransform()
    return PhotometricTransform(
        brightness=float(rng.uniform(-config.brightness, config.brightness)),
        contrast=float(rng.uniform(1.0 - config.contrast, 1.0 + config.contrast)),
        saturation=float(rng.uniform(1.0 - config.saturation, 1.0 + config.saturation)),
        hue_deg=float(rng.uniform(-config.hue_deg, config.hue_deg)),
    )
