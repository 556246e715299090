"""
Run configuration.

A run is configured by a flat key/value document with dotted keys, e.g.::

    # training
    loss.variant = probabilistic
    train.learning_rate = 0.001
    warp.rotation_deg = 30

Values are typed by the built-in defaults table. Sources are merged with the
precedence CLI overrides > environment > config file > defaults, and the fully
resolved document is echoed (``RunConfig.to_text``) into every output directory.

Typed, validated views of the document (``WarpConfig``, ``TrainingConfig``, ...)
are built with ``from_run_config`` and are what the rest of the package consumes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

from geostable.exceptions import ConfigError

NUM_WORKERS_ENV = "GEOSTABLE_NUM_WORKERS"

LOSS_VARIANTS = ("probabilistic", "plain", "contrastive")
OPTIMIZER_KINDS = ("adagrad_momentum", "adagrad", "sgd")

DEFAULTS: Dict[str, Any] = {
    # geometry
    "warp.rotation_deg": 30.0,
    "warp.scale_min": 1.0,
    "warp.scale_max": 1.5,
    "warp.shear": 0.2,
    "warp.translation": 0.15,
    "warp.max_retries": 100,
    "photo.enabled": True,
    "photo.brightness": 0.25,
    "photo.contrast": 0.4,
    "photo.saturation": 0.4,
    "photo.hue_deg": 18.0,
    "data.image_size": 96,
    # synthetic scenes
    "scene.canvas": 96,
    "scene.families": ("kite", "arrow", "house", "star"),
    "scene.area_fraction": (0.2, 0.45),
    "scene.rotation_deg": 40.0,
    "scene.clutter": 6,
    "scene.noise": 0.02,
    "scene.count": 200,
    # descriptor network
    "model.descriptor_dim": 64,
    "model.widths": (32, 64, 64, 128, 128),
    "model.strides": (1, 2, 1, 2, 1),
    "model.tap_index": 2,
    "model.epsilon": 1e-4,
    "model.seed": 0,
    # objective
    "loss.variant": "probabilistic",
    "loss.margin": 0.5,
    "pairs.n_points": 700,
    "pairs.hard_negatives": 30,
    "pairs.tau1": 1.0,
    "pairs.tau2": 30.0,
    # training
    "train.optimizer": "adagrad_momentum",
    "train.learning_rate": 0.001,
    "train.weight_decay": 0.0005,
    "train.momentum": 0.9,
    "train.batch_size": 1,
    "train.max_steps": 20000,
    "train.seed": 0,
    "train.patience": 5,
    "train.min_rel_improvement": 1e-3,
    "train.loss_smoothing": 0.9,
    "train.checkpoint_every": 1000,
    "train.num_workers": 1,
    "train.queue_size": 8,
    # evaluation
    "eval.pairs": 50,
    "eval.seed": 1234,
    "eval.pck_alpha": 0.1,
    "eval.alpha_max": 0.3,
    "eval.alpha_steps": 31,
    "eval.iou_steps": 21,
    "eval.k_values": (1, 2, 5, 10, 20, 50),
    "eval.proposal_scales": (24.0, 36.0, 48.0),
    "eval.proposal_aspects": (0.5, 1.0, 2.0),
    "eval.proposal_step": 12,
    "eval.roi_bins": 7,
    "eval.use_confidence": True,
    "eval.photometric": False,
    # few-shot keypoints
    "fewshot.rounds": 5,
    "fewshot.images_per_round": 1,
    "fewshot.heldout_per_family": 10,
    "fewshot.epochs": 3,
    "fewshot.min_steps": 500,
    "fewshot.batch_size": 4,
    "fewshot.head_width": 512,
    "fewshot.learning_rate": 0.001,
    "fewshot.sigma_rel": 0.05,
    "fewshot.positive_weight": 10.0,
    "fewshot.seeds": (0, 1, 2),
    # visualization
    "viz.channels": 4,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_scalar(raw: str, like: Any, key: str) -> Any:
    text = raw.strip()
    try:
        if isinstance(like, bool):
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
    except ValueError as e:
        raise ConfigError(f"Cannot parse value {raw!r} for '{key}': {e}") from e
    return text


def parse_value(key: str, raw: Any) -> Any:
    """Coerce *raw* (string or Python value) to the type of the default for *key*.

    Raises:
        ConfigError: If the key is unknown or the value cannot be parsed.
    """
    if key not in DEFAULTS:
        raise ConfigError(f"Unknown configuration key: '{key}'")
    like = DEFAULTS[key]

    if isinstance(like, tuple):
        if isinstance(raw, str):
            items: Iterable[Any] = [p.strip() for p in raw.split(",") if p.strip()]
        elif isinstance(raw, (list, tuple)):
            items = raw
        else:
            items = [raw]
        element = like[0] if like else ""
        return tuple(
            _parse_scalar(str(item), element, key) if not isinstance(item, type(element))
            else item
            for item in items
        )

    if isinstance(raw, str):
        return _parse_scalar(raw, like, key)
    if isinstance(like, bool):
        return _parse_scalar(str(raw), like, key)
    if isinstance(like, (int, float)) and isinstance(raw, (int, float)):
        if isinstance(like, int) and not float(raw).is_integer():
            raise ConfigError(f"Value {raw!r} for '{key}' is not an integer")
        return type(like)(raw)
    if isinstance(like, str):
        return str(raw)
    raise ConfigError(f"Invalid value {raw!r} for '{key}'")


def parse_text(text: str, origin: str = "<config>") -> Dict[str, str]:
    """Parse ``key = value`` lines into a raw mapping (blank lines and ``#`` comments skipped)."""
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Fully resolved configuration document.

    Attributes:
        values: Mapping from every known dotted key to its typed value
    """

    def __init__(self, values: Optional[Mapping[str, Any]] = None) -> None:
        self.values: Dict[str, Any] = dict(DEFAULTS)
        for key, value in (values or {}).items():
            self.values[key] = parse_value(key, value)

    @classmethod
    def from_sources(
        cls,
        path: Optional[Path] = None,
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "RunConfig":
        """Merge defaults, a config file, the environment and CLI overrides.

        Args:
            path: Optional config file with ``key = value`` lines
            overrides: CLI-level values (strings or typed values); highest precedence
            environ: Environment mapping (defaults to ``os.environ``)

        Returns:
            The resolved RunConfig

        Raises:
            ConfigError: If the file cannot be read or contains invalid entries
        """
        merged: Dict[str, Any] = {}
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as e:
                raise ConfigError(f"Cannot read config file '{path}': {e}") from e
            merged.update(parse_text(text, origin=str(path)))

        env = os.environ if environ is None else environ
        if env.get(NUM_WORKERS_ENV):
            merged["train.num_workers"] = env[NUM_WORKERS_ENV]

        merged.update(overrides or {})
        return cls(merged)

    def __getitem__(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"Unknown configuration key: '{key}'")
        return self.values[key]

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Return a copy with *overrides* applied on top."""
        merged = dict(self.values)
        merged.update(overrides)
        return RunConfig(merged)

    def section(self, prefix: str) -> Dict[str, Any]:
        """Return the values under ``prefix.`` with the prefix stripped."""
        head = prefix.rstrip(".") + "."
        return {k[len(head):]: v for k, v in self.values.items() if k.startswith(head)}

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a JSON-compatible dictionary (tuples become lists)."""
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """Rebuild from ``to_dict`` output, ignoring keys this version no longer knows."""
        return cls({k: v for k, v in data.items() if k in DEFAULTS})

    def to_text(self) -> str:
        """Render the resolved document in the config-file format, keys sorted."""
        return "\n".join(f"{k} = {_format_value(v)}" for k, v in sorted(self.values.items())) + "\n"

    def write_echo(self, directory: Path) -> Path:
        """Write ``config.txt`` into *directory* and return its path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "config.txt"
        path.write_text(self.to_text())
        return path

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self.values == other.values

    def __repr__(self) -> str:
        changed = {k: v for k, v in self.values.items() if DEFAULTS.get(k) != v}
        return f"RunConfig(overrides={changed!r})"


def _section_kwargs(cfg: RunConfig, prefix: str, cls: type) -> Dict[str, Any]:
    values = cfg.section(prefix)
    return {f.name: values[f.name] for f in fields(cls) if f.name in values}


@dataclass(frozen=True)
class WarpConfig:
    """Ranges for random affine warps.

    Angles are in degrees and translation is a fraction of the padded size.
    """

    rotation_deg: float = 30.0
    scale_min: float = 1.0
    scale_max: float = 1.5
    shear: float = 0.2
    translation: float = 0.15
    max_retries: int = 100

    def __post_init__(self) -> None:
        if self.scale_min < 1.0:
            raise ConfigError(f"warp.scale_min must be >= 1 (zoom-in bias), got {self.scale_min}")
        if self.scale_max < self.scale_min:
            raise ConfigError("warp.scale_max must be >= warp.scale_min")
        if min(self.rotation_deg, self.shear, self.translation) < 0:
            raise ConfigError("warp ranges must be nonnegative")
        if self.max_retries < 1:
            raise ConfigError("warp.max_retries must be positive")

    @classmethod
    def identity(cls) -> "WarpConfig":
        return cls(rotation_deg=0.0, scale_min=1.0, scale_max=1.0, shear=0.0, translation=0.0)

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "WarpConfig":
        return cls(**_section_kwargs(cfg, "warp", cls))


@dataclass(frozen=True)
class PhotometricConfig:
    """Jitter magnitudes for the colour transform applied after warping."""
    enabled: bool = True
    brightness: float = 0.25
    contrast: float = 0.4
    saturation: float = 0.4
    hue_deg: float = 18.0

    def __post_init__(self) -> None:
        if min(self.brightness, self.contrast, self.saturation, self.hue_deg) < 0:
            raise ConfigError("photometric ranges must be nonnegative")
        if self.contrast >= 1 or self.saturation >= 1:
            raise ConfigError("photo.contrast and photo.saturation must be < 1")

    @classmethod
    def disabled(cls) -> "PhotometricConfig":
        return cls(enabled=False)

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "PhotometricConfig":
        return cls(**_section_kwargs(cfg, "photo", cls))


@dataclass(frozen=True)
class BackboneConfig:
    """Tiny convolutional backbone plus descriptor head."""
    descriptor_dim: int = 64
    widths: Tuple[int, ...] = (32, 64, 64, 128, 128)
    strides: Tuple[int, ...] = (1, 2, 1, 2, 1)
    tap_index: int = 2
    epsilon: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.widths) != len(self.strides) or not self.widths:
            raise ConfigError("model.widths and model.strides must be nonempty and equal length")
        if not 0 <= self.tap_index < len(self.widths):
            raise ConfigError(f"model.tap_index out of range: {self.tap_index}")
        if self.descriptor_dim < 1:
            raise ConfigError("model.descriptor_dim must be positive")
        if self.epsilon <= 0:
            raise ConfigError("model.epsilon must be positive")

    @property
    def stride(self) -> int:
        total = 1
        for s in self.strides:
            total *= s
        return total

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "BackboneConfig":
        return cls(**_section_kwargs(cfg, "model", cls))


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer, pair sampling and stopping parameters of a training run."""
    learning_rate: float = 0.001
    weight_decay: float = 0.0005
    momentum: float = 0.9
    optimizer: str = "adagrad_momentum"
    batch_size: int = 1
    n_points: int = 700
    hard_negatives: int = 30
    tau1: float = 1.0
    tau2: float = 30.0
    loss_variant: str = "probabilistic"
    margin: float = 0.5
    max_steps: int = 20000
    seed: int = 0
    patience: int = 5
    min_rel_improvement: float = 1e-3
    loss_smoothing: float = 0.9
    checkpoint_every: int = 1000
    num_workers: int = 1
    queue_size: int = 8
    image_size: int = 96

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("rates must be positive and momentum in [0, 1)")
        if self.tau1 >= self.tau2:
            raise ConfigError(f"pairs.tau1 ({self.tau1}) must be < pairs.tau2 ({self.tau2})")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ConfigError(
                f"Unknown loss variant '{self.loss_variant}'; "
                f"valid values: {', '.join(LOSS_VARIANTS)}"
            )
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigError(
                f"Unknown optimizer '{self.optimizer}'; valid values: {', '.join(OPTIMIZER_KINDS)}"
            )
        if self.n_points < 2 or self.hard_negatives < 1 or self.batch_size < 1:
            raise ConfigError("pairs.n_points >= 2, pairs.hard_negatives >= 1, batch_size >= 1")
        if self.max_steps < 0 or self.patience < 1 or self.num_workers < 1:
            raise ConfigError("max_steps >= 0, patience >= 1 and num_workers >= 1 required")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "TrainingConfig":
        kwargs = _section_kwargs(cfg, "train", cls)
        kwargs.update(_section_kwargs(cfg, "pairs", cls))
        kwargs["loss_variant"] = cfg["loss.variant"]
        kwargs["margin"] = cfg["loss.margin"]
        kwargs["image_size"] = cfg["data.image_size"]
        return cls(**kwargs)


@dataclass(frozen=True)
class EvalConfig:
    """Matching protocol parameters."""
    pairs: int = 50
    seed: int = 1234
    pck_alpha: float = 0.1
    alpha_max: float = 0.3
    alpha_steps: int = 31
    iou_steps: int = 21
    k_values: Tuple[int, ...] = (1, 2, 5, 10, 20, 50)
    proposal_scales: Tuple[float, ...] = (24.0, 36.0, 48.0)
    proposal_aspects: Tuple[float, ...] = (0.5, 1.0, 2.0)
    proposal_step: int = 12
    roi_bins: int = 7
    use_confidence: bool = True
    photometric: bool = False

    def __post_init__(self) -> None:
        if self.alpha_steps < 2 or self.iou_steps < 2 or self.alpha_max <= 0:
            raise ConfigError("eval alpha/iou grids need at least two points and alpha_max > 0")
        if self.roi_bins < 1 or self.proposal_step < 1:
            raise ConfigError("eval.roi_bins and eval.proposal_step must be positive")
        if any(k < 1 for k in self.k_values):
            raise ConfigError(f"eval.k_values must all be >= 1, got {self.k_values}")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "EvalConfig":
        return cls(**_section_kwargs(cfg, "eval", cls))


@dataclass(frozen=True)
class FewShotConfig:
    """Few-shot keypoint protocol: rounds, head training schedule and heatmap targets."""
    rounds: int = 5
    images_per_round: int = 1
    heldout_per_family: int = 10
    epochs: int = 3
    min_steps: int = 500
    batch_size: int = 4
    head_width: int = 512
    learning_rate: float = 0.001
    sigma_rel: float = 0.05
    positive_weight: float = 10.0
    seeds: Tuple[int, ...] = (0, 1, 2)

    def __post_init__(self) -> None:
        if self.rounds < 1 or self.images_per_round < 1 or self.epochs < 1:
            raise ConfigError("fewshot.rounds, images_per_round and epochs must be positive")
        if not self.seeds:
            raise ConfigError("fewshot.seeds must not be empty")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "FewShotConfig":
        return cls(**_section_kwargs(cfg, "fewshot", cls))


@dataclass(frozen=True)
class SceneConfig:
    """Procedural scene generator parameters."""
    canvas: int = 96
    families: Tuple[str, ...] = ("kite", "arrow", "house", "star")
    area_fraction: Tuple[float, ...] = (0.2, 0.45)
    rotation_deg: float = 40.0
    clutter: int = 6
    noise: float = 0.02

    def __post_init__(self) -> None:
        if self.canvas < 16:
            raise ConfigError("scene.canvas must be at least 16 pixels")
        if len(self.area_fraction) != 2:
            raise ConfigError("scene.area_fraction must be a (low, high) pair")
        low, high = self.area_fraction
        if not 0 < low <= high < 1:
            raise ConfigError("scene.area_fraction must satisfy 0 < low <= high < 1")

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "SceneConfig":
        return cls(**_section_kwargs(cfg, "scene", cls))
