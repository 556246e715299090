"""
Metric reports.

A MetricReport carries the curves of one evaluation run (PCK over alpha, PCR
over IoU threshold, mIoU over k), their scalar summaries and free-form extras
such as the config echo. It serializes to a versioned JSON document and can
render its curves as PNG files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from geostable.exceptions import GeostableError
from geostable.utils import serialization
from geostable.utils.visualization import plot_curve

_CURVES = ("pck", "pcr", "miou")


def _clean(values: List[float]) -> List[Optional[float]]:
    return [None if v is None or math.isnan(v) else float(v) for v in values]


@dataclass
class MetricReport:
    """Curves and summaries of one evaluation.

    Attributes:
        name: Report identifier (checkpoint and dataset ids)
        alphas: PCK thresholds
        pck: PCK at each alpha
        iou_thresholds: PCR thresholds
        pcr: PCR at each threshold
        k_values: Match counts for mIoU@k
        miou: mIoU at each k
        pck_at: PCK at the headline alpha
        pck_alpha: The headline alpha
        pck_auc: Normalized area under the PCK curve
        extra: Additional JSON-compatible entries
    """
    name: str
    alphas: List[float] = field(default_factory=list)
    pck: List[float] = field(default_factory=list)
    iou_thresholds: List[float] = field(default_factory=list)
    pcr: List[float] = field(default_factory=list)
    k_values: List[int] = field(default_factory=list)
    miou: List[float] = field(default_factory=list)
    pck_at: Optional[float] = None
    pck_alpha: float = 0.1
    pck_auc: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        """Check curve lengths and the [0, 1] range of every defined value.

        Raises:
            ValueError: If a curve is malformed
        """
        pairs = (
            ("pck", self.alphas, self.pck),
            ("pcr", self.iou_thresholds, self.pcr),
            ("miou", self.k_values, self.miou),
        )
        for name, grid, values in pairs:
            if len(grid) != len(values):
                raise ValueError(f"{name}: {len(values)} values for {len(grid)} grid points")
            for v in values:
                if v is not None and not math.isnan(v) and not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name} value {v} outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation; NaN becomes ``None``."""
        return {
            "name": self.name,
            "alphas": [float(a) for a in self.alphas],
            "pck": _clean(self.pck),
            "iou_thresholds": [float(t) for t in self.iou_thresholds],
            "pcr": _clean(self.pcr),
            "k_values": [int(k) for k in self.k_values],
            "miou": _clean(self.miou),
            "pck_at": _clean([self.pck_at])[0] if self.pck_at is not None else None,
            "pck_alpha": float(self.pck_alpha),
            "pck_auc": _clean([self.pck_auc])[0] if self.pck_auc is not None else None,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricReport":
        """Inverse of ``to_dict``; missing values come back as NaN."""
        def curve(key: str) -> List[float]:
            return [math.nan if v is None else float(v) for v in data.get(key, [])]

        return cls(
            name=data["name"],
            alphas=[float(a) for a in data.get("alphas", [])],
            pck=curve("pck"),
            iou_thresholds=[float(t) for t in data.get("iou_thresholds", [])],
            pcr=curve("pcr"),
            k_values=[int(k) for k in data.get("k_values", [])],
            miou=curve("miou"),
            pck_at=data.get("pck_at"),
            pck_alpha=float(data.get("pck_alpha", 0.1)),
            pck_auc=data.get("pck_auc"),
            extra=dict(data.get("extra", {})),
        )

    def to_json(self, **kwargs: Any) -> str:
        return serialization.to_json(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, json_str: str) -> "MetricReport":
        """Parse a report written by ``to_json``.

        Raises:
            ValueError: If the document is not valid JSON or lacks a version
            VersionMismatchError: If the version differs
        """
        return cls.from_dict(serialization.from_json(json_str))

    def write(self, directory: Path) -> Path:
        """Write ``<name>.json`` into *directory*.

        Raises:
            GeostableError: If the file cannot be written
        """
        path = Path(directory) / f"{self.name}.json"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_json(indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise GeostableError(f"Cannot write report '{path}': {e}") from e
        return path

    @classmethod
    def read(cls, path: Path) -> "MetricReport":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise GeostableError(f"Cannot read report '{path}': {e}") from e
        return cls.from_json(text)

    def plot(self, directory: Path) -> List[Path]:
        """Render every nonempty curve to ``<name>_<curve>.png``."""
        grids = {"pck": self.alphas, "pcr": self.iou_thresholds, "miou": self.k_values}
        labels = {"pck": "alpha", "pcr": "IoU threshold", "miou": "k"}
        written = []
        for curve in _CURVES:
            values = getattr(self, curve)
            if not values:
                continue
            written.append(plot_curve(
                Path(directory) / f"{self.name}_{curve}.png",
                grids[curve], values, xlabel=labels[curve], ylabel=curve.upper(), title=self.name,
            ))
        return written
