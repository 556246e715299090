"""
Procedural object scenes.

Each scene shows one object of a family (kite, arrow, house, star) on a
cluttered smooth background. A family is an asymmetric polygon template; its
landmarks are the template vertices pulled towards the centroid, so landmark
``i`` is the same part on every instance. The object gets a random similarity
transform and a family-tinted texture defined in object coordinates, so the
texture moves with the object. Images are quantized to 8 bits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from matplotlib.colors import hsv_to_rgb
from PIL import Image, ImageDraw
from scipy import ndimage

from geostable.config import SceneConfig
from geostable.geometry.imaging import ImageArray, from_uint8, to_uint8
from geostable.geometry.keypoints import KeypointSet, mask_box
from geostable.geometry.warps import (
    AffineWarp,
    compose,
    invert,
    rotation,
    scaling,
    translation,
)

logger = logging.getLogger(__name__)

LANDMARK_PULL = 0.15
_FALLBACK_PULLS = (0.25, 0.35, 0.5, 0.7)
_MARGIN = 2.0


@dataclass(frozen=True)
class Template:
    """Polygon template in unit coordinates (y down) and its landmark vertex indices."""
    vertices: Tuple[Tuple[float, float], ...]
    landmarks: Tuple[int, ...]
    hue: float

    @property
    def array(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.vertices, dtype=np.float64)

    @property
    def area(self) -> float:
        x, y = self.array.T
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def centroid(self) -> npt.NDArray[np.float64]:
        return self.array.mean(axis=0)


def _star(
    points: int = 5,
    outer: float = 1.0,
    inner: float = 0.6,
) -> Tuple[Tuple[float, float], ...]:
    verts = []
    for k in range(2 * points):
        radius = outer if k % 2 == 0 else inner
        # one arm stretched so the star has a distinguished top
        if k == 0:
            radius *= 1.15
        angle = -np.pi / 2 + k * np.pi / points
        verts.append((float(radius * np.cos(angle)), float(radius * np.sin(angle))))
    return tuple(verts)


TEMPLATES: Dict[str, Template] = {
    "kite": Template(
        vertices=((0.0, -1.0), (0.6, -0.2), (0.0, 1.0), (-0.5, -0.2)),
        landmarks=(0, 1, 2, 3),
        hue=0.02,
    ),
    "arrow": Template(
        vertices=(
            (-1.0, -0.25), (0.2, -0.25), (0.2, -0.55), (1.0, 0.05),
            (0.2, 0.65), (0.2, 0.3), (-1.0, 0.3),
        ),
        landmarks=(0, 2, 3, 4, 6),
        hue=0.33,
    ),
    "house": Template(
        vertices=((-0.8, 1.0), (0.8, 1.0), (0.8, -0.1), (0.25, -0.9), (-0.8, -0.1)),
        landmarks=(0, 1, 2, 3, 4),
        hue=0.6,
    ),
    "star": Template(vertices=_star(), landmarks=(0, 2, 4, 6, 8), hue=0.12),
}


def landmark_names(family: str) -> Tuple[str, ...]:
    return tuple(f"{family}_{i}" for i in range(len(TEMPLATES[family].landmarks)))


@dataclass(frozen=True, eq=False)
class SynthScene:
    """One generated scene.

    Attributes:
        scene_id: Identifier within its dataset
        seed: Generator seed; ``generate_scene(seed, config, family)`` rebuilds the scene
        family: Object family name
        image: ``(H, W, 3)`` image, multiples of 1/255
        mask: ``(H, W)`` foreground mask
        keypoints: Landmarks, all inside the mask
    """
    scene_id: str
    seed: int
    family: str
    image: ImageArray
    mask: npt.NDArray[np.bool_]
    keypoints: KeypointSet

    def equals(self, other: "SynthScene") -> bool:
        return (
            (self.scene_id, self.seed, self.family) == (other.scene_id, other.seed, other.family)
            and bool(np.array_equal(self.image, other.image))
            and bool(np.array_equal(self.mask, other.mask))
            and self.keypoints.allclose(other.keypoints)
        )


def _object_transform(
    rng: np.random.Generator,
    template: Template,
    config: SceneConfig,
) -> AffineWarp:
    """Similarity map from template to canvas, shrunk to fit inside the canvas."""
    canvas = float(config.canvas)
    low, high = config.area_fraction
    target = rng.uniform(low, high) * canvas * canvas
    scale = float(np.sqrt(target / template.area))
    angle = float(rng.uniform(-config.rotation_deg, config.rotation_deg))

    centered = template.array - template.centroid
    placed = compose(rotation(angle), scaling(scale))(centered)
    extent = placed.max(axis=0) - placed.min(axis=0)
    fit = min(1.0, *((canvas - 2 * _MARGIN) / extent))
    placed = placed * fit

    lo = _MARGIN - placed.min(axis=0)
    hi = canvas - _MARGIN - placed.max(axis=0)
    offset = rng.uniform(lo, np.maximum(lo, hi))
    return compose(
        translation(float(offset[0]), float(offset[1])),
        compose(rotation(angle), compose(scaling(scale * fit), translation(*(-template.centroid)))),
    )


def _rasterize(polygon: npt.NDArray[np.float64], size: int) -> npt.NDArray[np.bool_]:
    canvas = Image.new("L", (size, size), 0)
    # PIL pixels are centred on integer coordinates
    ImageDraw.Draw(canvas).polygon([tuple(p) for p in (polygon - 0.5).tolist()], fill=255)
    return np.asarray(canvas) > 127


def _background(rng: np.random.Generator, config: SceneConfig) -> ImageArray:
    size = config.canvas
    noise = rng.normal(size=(size, size, 3))
    smooth = ndimage.gaussian_filter(noise, sigma=(size / 8, size / 8, 0))
    smooth = (smooth - smooth.min()) / max(float(np.ptp(smooth)), 1e-12)
    base = rng.uniform(0.25, 0.75, size=3)
    image = np.clip(0.5 * base + 0.5 * smooth, 0.0, 1.0)

    canvas = Image.fromarray(to_uint8(image))
    draw = ImageDraw.Draw(canvas)
    for _ in range(config.clutter):
        x0, y0 = rng.uniform(0, size, size=2)
        w, h = rng.uniform(size / 16, size / 5, size=2)
        color = tuple(int(c) for c in rng.integers(0, 256, size=3))
        box = [float(x0), float(y0), float(x0 + w), float(y0 + h)]
        if rng.random() < 0.5:
            draw.ellipse(box, fill=color)
        else:
            draw.rectangle(box, fill=color)
    return from_uint8(np.asarray(canvas))


def _texture(
    rng: np.random.Generator,
    template: Template,
    to_canvas: AffineWarp,
    size: int,
) -> ImageArray:
    """Family-tinted stripes and blobs in template coordinates."""
    ys, xs = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    local = invert(to_canvas)(np.stack([xs.ravel(), ys.ravel()], axis=1))
    u, v = local[:, 0].reshape(size, size), local[:, 1].reshape(size, size)
    freq = rng.uniform(2.0, 4.0, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    pattern = 0.5 + 0.25 * np.sin(2 * np.pi * freq[0] * u + phase[0]) \
        + 0.25 * np.cos(2 * np.pi * freq[1] * (u + v) + phase[1])
    # brighter towards the template's first vertex
    first = template.array[0] - template.centroid
    du, dv = u - template.centroid[0], v - template.centroid[1]
    ramp = 0.5 + 0.5 * np.clip((du * first[0] + dv * first[1]) / float(first @ first), -1.0, 1.0)

    hue = np.full((size, size), (template.hue + rng.uniform(-0.03, 0.03)) % 1.0)
    sat = np.clip(0.55 + 0.35 * pattern - 0.2 * ramp, 0.0, 1.0)
    val = np.clip(0.35 + 0.45 * ramp + 0.2 * pattern, 0.0, 1.0)
    return hsv_to_rgb(np.stack([hue, sat, val], axis=-1))


def _landmarks(
    template: Template,
    to_canvas: AffineWarp,
    mask: npt.NDArray[np.bool_],
) -> npt.NDArray[np.float64]:
    verts = template.array
    centroid = template.centroid
    points = []
    size = mask.shape[0]
    for index in template.landmarks:
        for pull in (LANDMARK_PULL,) + _FALLBACK_PULLS:
            point = to_canvas(verts[index] + pull * (centroid - verts[index]))
            col, row = int(np.floor(point[0])), int(np.floor(point[1]))
            if 0 <= row < size and 0 <= col < size and mask[row, col]:
                break
        points.append(point)
    return np.asarray(points)


def generate_scene(
    seed: int,
    config: Optional[SceneConfig] = None,
    family: Optional[str] = None,
    scene_id: str = "",
) -> SynthScene:
    """Deterministic scene for ``(seed, config, family)``.

    Args:
        seed: Scene seed
        config: Generator parameters
        family: Object family; drawn from ``config.families`` when omitted
        scene_id: Identifier stored on the scene

    Raises:
        ValueError: If the family is unknown
    """
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    if family is None:
        family = config.families[int(rng.integers(len(config.families)))]
    if family not in TEMPLATES:
        raise ValueError(f"Unknown object family '{family}'; known: {', '.join(TEMPLATES)}")
    template = TEMPLATES[family]
    size = config.canvas

    to_canvas = _object_transform(rng, template, config)
    mask = _rasterize(to_canvas(template.array), size)
    background = _background(rng, config)
    texture = _texture(rng, template, to_canvas, size)
    image = np.where(mask[..., None], texture, background)
    image = np.clip(image + rng.normal(scale=config.noise, size=image.shape), 0.0, 1.0)
    image = from_uint8(to_uint8(image))

    keypoints = KeypointSet.create(
        landmark_names(family),
        _landmarks(template, to_canvas, mask),
        box=mask_box(mask),
    )
    return SynthScene(scene_id or f"{seed}", seed, family, image, mask, keypoints)


def scene_seeds(seed: int, count: int) -> List[int]:
    """Per-scene seeds of a dataset drawn from the dataset seed."""
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)]


class SceneDataset:
    """Ordered collection of scenes with family lookup."""

    def __init__(self, scenes: Sequence[SynthScene]) -> None:
        self.scenes: List[SynthScene] = list(scenes)

    def __len__(self) -> int:
        return len(self.scenes)

    def __getitem__(self, index: int) -> SynthScene:
        return self.scenes[index]

    def __iter__(self) -> Iterator[SynthScene]:
        return iter(self.scenes)

    @property
    def images(self) -> List[ImageArray]:
        return [scene.image for scene in self.scenes]

    def families(self) -> List[str]:
        """Families present, in first-appearance order."""
        return list(dict.fromkeys(scene.family for scene in self.scenes))

    def by_family(self, family: str) -> "SceneDataset":
        return SceneDataset([scene for scene in self.scenes if scene.family == family])

    def split(
        self, n_heldout: int, per_family: bool = False
    ) -> Tuple["SceneDataset", "SceneDataset"]:
        """``(train, heldout)``: the last ``n_heldout`` scenes, overall or of every family."""
        if n_heldout < 0:
            raise ValueError(f"n_heldout must be >= 0, got {n_heldout}")
        if not per_family:
            cut = max(0, len(self.scenes) - n_heldout)
            return SceneDataset(self.scenes[:cut]), SceneDataset(self.scenes[cut:])
        heldout_ids = set()
        for family in self.families():
            members = self.by_family(family).scenes
            heldout_ids.update(id(s) for s in members[max(0, len(members) - n_heldout):])
        train = [s for s in self.scenes if id(s) not in heldout_ids]
        heldout = [s for s in self.scenes if id(s) in heldout_ids]
        return SceneDataset(train), SceneDataset(heldout)

    def equals(self, other: "SceneDataset") -> bool:
        return len(self) == len(other) and all(a.equals(b) for a, b in zip(self, other))


def generate_dataset(
    count: int,
    seed: int = 0,
    config: Optional[SceneConfig] = None,
) -> SceneDataset:
    """``count`` scenes cycling through the configured families."""
    config = config or SceneConfig()
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    families = config.families
    scenes = [
        generate_scene(scene_seed, config, families[index % len(families)], f"{index:05d}")
        for index, scene_seed in enumerate(scene_seeds(seed, count))
    ]
    logger.info("Generated %d scenes from seed %d", len(scenes), seed)
    return SceneDataset(scenes)
