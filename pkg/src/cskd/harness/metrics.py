"""Reading persisted run directories back into metrics tables."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from src.cskd.distill.metrics import METRIC_FIELDS
from src.cskd.errors import ArtifactMissingError, ConfigurationError
from src.cskd.utils import PathLike


@dataclass
class RunMetrics:
    """The metrics stream of one run plus its resolved config tree."""

    rows: List[Dict[str, Any]]
    config: Dict[str, Any]
    run_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Raise ``ConfigurationError`` unless epochs strictly increase and accuracies lie in [0, 1]."""
        epochs = [row["epoch"] for row in self.rows]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigurationError(f"metrics epochs are not strictly increasing: {epochs}")
        for row in self.rows:
            missing = [name for name in METRIC_FIELDS if name not in row]
            if missing:
                raise ConfigurationError(f"metrics row for epoch {row.get('epoch')} lacks {', '.join(missing)}")
            if not 0.0 <= row["student_acc"] <= 1.0:
                raise ConfigurationError(f"student_acc {row['student_acc']} outside [0, 1] at epoch {row['epoch']}")

    @property
    def mode(self) -> str:
        return self.config.get("mode", self.rows[0]["mode"] if self.rows else "")

    @property
    def seed(self) -> Optional[int]:
        return self.config.get("seed")

    @property
    def best_accuracy(self) -> float:
        """Maximum student accuracy observed over the run."""
        if not self.rows:
            raise ConfigurationError(f"run {self.run_dir} has no metrics rows")
        return max(row["student_acc"] for row in self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(METRIC_FIELDS))


def read_metrics(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_run(run_dir: PathLike) -> RunMetrics:
    """Read ``config.json`` and ``metrics.jsonl`` of a run directory.

    Raises:
        ArtifactMissingError: the directory or one of the files does not exist.
    """
    run_dir = Path(run_dir)
    config_path, metrics_path = run_dir / "config.json", run_dir / "metrics.jsonl"
    for path in (config_path, metrics_path):
        if not path.is_file():
            raise ArtifactMissingError(f"not a run directory: {path} is missing")
    config = json.loads(config_path.read_text(encoding="utf-8"))
    return RunMetrics(read_metrics(metrics_path), config, run_dir)
