"""Evaluation harness.

Accuracy, class-alignment diagnostics, 2-D feature projections, per-class
sample grids, run-directory readers and the multi-run studies (ablation,
scaling, guidance-only baseline).
"""

from src.cskd.harness.evaluate import evaluate_accuracy
from src.cskd.harness.alignment import alignment_from_features, alignment_from_stats, class_alignment_metric
from src.cskd.harness.metrics import RunMetrics, load_run, read_metrics
from src.cskd.harness.projection import Projection, feature_projection_2d, project_sets, save_projection
from src.cskd.harness.samples import class_grid, save_class_grid
from src.cskd.harness.studies import (
    ABLATION_LABELS,
    AblationReport,
    ablation_from_runs,
    ablation_variant,
    run_ablation,
    run_guidance_baseline,
    run_scaling_study,
    scaling_from_runs,
)

__all__ = [
    "evaluate_accuracy",
    "alignment_from_features",
    "alignment_from_stats",
    "class_alignment_metric",
    "RunMetrics",
    "load_run",
    "read_metrics",
    "Projection",
    "feature_projection_2d",
    "project_sets",
    "save_projection",
    "class_grid",
    "save_class_grid",
    "ABLATION_LABELS",
    "AblationReport",
    "ablation_from_runs",
    "ablation_variant",
    "run_ablation",
    "run_guidance_baseline",
    "run_scaling_study",
    "scaling_from_runs",
]
