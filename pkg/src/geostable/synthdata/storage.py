"""
Dataset directory I/O.

Layout::

    index.txt            "# geostable-dataset 1.0" then "id seed family" rows
    scenes/<id>.png      RGB image
    masks/<id>.png       foreground mask, 0 or 255
    keypoints/<id>.txt   one "name x y visible" line per keypoint

Images are stored losslessly and scenes are 8-bit quantized, so a write/read
round trip is exact. Object boxes are recomputed from the masks.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from geostable.exceptions import DatasetError, VersionMismatchError
from geostable.geometry.imaging import from_uint8, to_uint8
from geostable.geometry.keypoints import KEYPOINT_COLUMNS, KeypointSet, mask_box
from geostable.synthdata.scenes import SceneDataset, SynthScene

logger = logging.getLogger(__name__)

DATASET_VERSION = "1.0"
INDEX_HEADER = f"# geostable-dataset {DATASET_VERSION}"
INDEX_FILE = "index.txt"
INDEX_COLUMNS = ["id", "seed", "family"]


def _scene_paths(root: Path, scene_id: str) -> tuple[Path, Path, Path]:
    return (
        root / "scenes" / f"{scene_id}.png",
        root / "masks" / f"{scene_id}.png",
        root / "keypoints" / f"{scene_id}.txt",
    )


def write_dataset(path: Path, dataset: SceneDataset) -> Path:
    """Write *dataset* under *path* (created if needed) and return the index path.

    Raises:
        DatasetError: If a file cannot be written
    """
    root = Path(path)
    try:
        for sub in ("scenes", "masks", "keypoints"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        for scene in dataset:
            image_path, mask_path, kp_path = _scene_paths(root, scene.scene_id)
            Image.fromarray(to_uint8(scene.image)).save(image_path)
            Image.fromarray(scene.mask.astype(np.uint8) * 255).save(mask_path)
            scene.keypoints.to_frame().to_csv(kp_path, sep=" ", header=False, index=False)

        index = pd.DataFrame(
            [(s.scene_id, s.seed, s.family) for s in dataset], columns=INDEX_COLUMNS
        )
        index_path = root / INDEX_FILE
        with open(index_path, "w") as f:
            f.write(INDEX_HEADER + "\n")
            index.to_csv(f, sep=" ", index=False)
    except OSError as e:
        raise DatasetError(f"Cannot write dataset under '{root}': {e}") from e
    logger.info("Wrote %d scenes to %s", len(dataset), root)
    return index_path


def read_index(path: Path) -> pd.DataFrame:
    """Parse ``index.txt``.

    Raises:
        DatasetError: If the index is missing or corrupt
        VersionMismatchError: If the dataset format version differs
    """
    index_path = Path(path) / INDEX_FILE
    try:
        text = index_path.read_text()
    except OSError as e:
        raise DatasetError(f"Cannot read dataset index '{index_path}': {e}") from e

    header, _, body = text.partition("\n")
    if not header.startswith("# geostable-dataset "):
        raise DatasetError(f"Corrupt dataset index '{index_path}': missing header line")
    version = header.split()[-1]
    if version != DATASET_VERSION:
        raise VersionMismatchError(
            f"Dataset '{index_path}' has version {version}; expected {DATASET_VERSION}"
        )
    try:
        frame = pd.read_csv(io.StringIO(body), sep=" ", dtype={"id": str, "family": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise DatasetError(f"Corrupt dataset index '{index_path}': {e}") from e
    if list(frame.columns) != INDEX_COLUMNS:
        raise DatasetError(
            f"Corrupt dataset index '{index_path}': columns {list(frame.columns)}, "
            f"expected {INDEX_COLUMNS}"
        )
    return frame


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img)
    except OSError as e:
        raise DatasetError(f"Missing or unreadable shard '{path}': {e}") from e


def read_scene(root: Path, scene_id: str, seed: int, family: str) -> SynthScene:
    """Load one scene listed in the index.

    Raises:
        DatasetError: If one of its files is missing or corrupt
    """
    image_path, mask_path, kp_path = _scene_paths(Path(root), scene_id)
    image = from_uint8(_read_png(image_path))
    mask = _read_png(mask_path) > 127
    try:
        frame = pd.read_csv(
            kp_path, sep=" ", header=None, names=KEYPOINT_COLUMNS,
            dtype={"name": str}, float_precision="round_trip",
        )
        keypoints = KeypointSet.from_frame(frame, mask_box(mask))
    except FileNotFoundError as e:
        raise DatasetError(f"Missing shard '{kp_path}'") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError, KeyError) as e:
        raise DatasetError(f"Corrupt keypoint file '{kp_path}': {e}") from e
    return SynthScene(scene_id, int(seed), family, image, mask, keypoints)


def read_dataset(path: Path) -> SceneDataset:
    """Load a dataset written by ``write_dataset``.

    Raises:
        DatasetError: If the index or any listed shard is missing or corrupt
        VersionMismatchError: If the dataset format version differs
    """
    root = Path(path)
    index = read_index(root)
    scenes = [
        read_scene(root, str(row.id), int(row.seed), str(row.family))
        for row in index.itertuples(index=False)
    ]
    logger.debug("Read %d scenes from %s", len(scenes), root)
    return SceneDataset(scenes)
