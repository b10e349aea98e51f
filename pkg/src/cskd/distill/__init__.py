"""Student distillation.

The KD loss, the mixed guidance/synthetic sample pool, per-epoch metrics and
the epoch loop that ties inversion and student updates together.
"""

from src.cskd.distill.context import KDConfig
from src.cskd.distill.losses import kd_loss
from src.cskd.distill.pool import PoolBatch, PoolEntry, SyntheticPool
from src.cskd.distill.metrics import METRIC_FIELDS, MetricsRow, MetricsWriter
from src.cskd.distill.loop import DistillResult, Distiller, resolve_guidance, run_dir_for, run_distillation

__all__ = [
    "KDConfig",
    "kd_loss",
    "PoolBatch",
    "PoolEntry",
    "SyntheticPool",
    "METRIC_FIELDS",
    "MetricsRow",
    "MetricsWriter",
    "DistillResult",
    "Distiller",
    "resolve_guidance",
    "run_dir_for",
    "run_distillation",
]
