"""Per-step training metrics and the newline-delimited metrics log."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from geostable.exceptions import GeostableError

METRIC_FIELDS = (
    "step", "epoch", "loss", "mean_pos_score", "mean_neg_score", "mean_sigma", "wall_time"
)
AVERAGED_FIELDS = ("loss", "mean_pos_score", "mean_neg_score", "mean_sigma")


@dataclass(frozen=True)
class StepMetrics:
    """Outcome of one training step; ``skipped`` steps carry NaN statistics."""
    step: int
    loss: float
    mean_pos_score: float
    mean_neg_score: float
    mean_sigma: float
    pairs: int
    skipped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary representation."""
        return asdict(self)


class MetricsLog:
    """Append-only NDJSON log with one record per step."""

    def __init__(self, path: Path, deterministic: bool = True) -> None:
        self.path = Path(path)
        self.deterministic = deterministic

    def append(self, metrics: StepMetrics, wall_time: float, epoch: int = 0) -> None:
        record = {
            **metrics.to_dict(),
            "epoch": epoch,
            "wall_time": wall_time,
            "deterministic": self.deterministic,
        }
        line = pd.DataFrame([record]).to_json(orient="records", lines=True).rstrip("\n")
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as f:
                f.write(line + "\n")
        except OSError as e:
            raise GeostableError(f"Cannot append to metrics log '{self.path}': {e}") from e

    @staticmethod
    def read(path: Path) -> pd.DataFrame:
        """All records of a log; an empty frame with the metric columns if it holds none."""
        path = Path(path)
        if not path.exists() or path.stat().st_size == 0:
            return pd.DataFrame(columns=list(METRIC_FIELDS))
        return pd.read_json(path, orient="records", lines=True)

    @staticmethod
    def epoch_means(frame: pd.DataFrame) -> pd.DataFrame:
        """Mean statistics per epoch over the steps that were not skipped."""
        columns = ["epoch", *AVERAGED_FIELDS, "steps"]
        if frame.empty:
            return pd.DataFrame(columns=columns)
        kept = frame[~frame["skipped"].astype(bool)] if "skipped" in frame else frame
        grouped = kept.groupby("epoch", sort=True)
        means = grouped[list(AVERAGED_FIELDS)].mean()
        means["steps"] = grouped.size()
        return means.reset_index()[columns]

    def write_epoch_means(self, path: Path) -> Path:
        """Write ``epoch_means`` of this log as CSV."""
        path = Path(path)
        try:
            self.epoch_means(self.read(self.path)).to_csv(path, index=False)
        except OSError as e:
            raise GeostableError(f"Cannot write epoch summary '{path}': {e}") from e
        return path
