"""Per-epoch metrics rows, written as JSON lines."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from src.cskd.utils import PathLike

METRIC_FIELDS = ("epoch", "mode", "student_acc", "loss_g", "loss_d", "loss_kd", "align_dist", "seed", "wall_ms")


@dataclass
class MetricsRow:
    epoch: int
    mode: str
    student_acc: float
    loss_g: float
    loss_d: Optional[float]
    loss_kd: float
    align_dist: Optional[float]
    seed: int
    wall_ms: Optional[int] = None

    def to_json(self) -> str:
        row = asdict(self)
        return json.dumps({name: row[name] for name in METRIC_FIELDS}, separators=(",", ":"))


class MetricsWriter:
    """Append-only JSON-lines stream; the file is truncated when the writer opens."""

    def __init__(self, path: PathLike) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_bytes(b"")

    def write(self, row: MetricsRow) -> None:
        with open(self.path, "a", encoding="utf-8", newline="\n") as f:
            f.write(row.to_json() + "\n")
            f.flush()
            os.fsync(f.fileno())
