"""Multi-run studies: the ablation matrix, condensed-size scaling and the guidance-only baseline.

Every study takes a base ``RunConfig``, derives one config per (variant, seed),
runs it through an injectable runner and reduces the best accuracies of the
completed runs. Reports can also be rebuilt from run directories alone.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd

from src.cskd.context import to_tree
from src.cskd.errors import ArtifactMissingError, ConfigurationError
from src.cskd.guidance.dataset import LabeledImageSet, load_dataset
from src.cskd.guidance.storage import load_condensed
from src.cskd.harness.metrics import RunMetrics, load_run
from src.cskd.models.classifiers import ClassifierSpec
from src.cskd.models.checkpoint import read_meta
from src.cskd.models.training import train_classifier
from src.cskd.utils import PathLike, config_hash, derive_seed, resolve_device

if TYPE_CHECKING:
    from src.cskd.cli.context import RunConfig

logger = logging.getLogger(__name__)

ABLATION_LABELS = ("base", "plus_cs", "cs_guided", "class_specific")
SCALING_MODES = ("plus_cs", "star")

Runner = Callable[["RunConfig"], Any]


def _default_runner(cfg: "RunConfig") -> Any:
    from src.cskd.distill.loop import run_distillation

    return run_distillation(cfg)


def run_accuracy(result: Any) -> float:
    """Maximum student accuracy observed in a run result."""
    rows = getattr(result, "rows", None)
    if rows:
        return max(row.student_acc for row in rows)
    return float(result.best_accuracy)


def ablation_variant(base: "RunConfig", label: str, seed: int) -> "RunConfig":
    """Config of one ablation row: base, plus_cs, cs_guided (generic alignment) or class_specific."""
    if label == "base":
        return dataclasses.replace(base, mode="datafree", seed=seed)
    if label == "plus_cs":
        return dataclasses.replace(base, mode="plus_cs", seed=seed)
    if label in ("cs_guided", "class_specific"):
        inversion = dataclasses.replace(base.inversion, conditional=label == "class_specific")
        return dataclasses.replace(base, mode="star", inversion=inversion, seed=seed)
    raise ConfigurationError(f"unknown ablation label {label!r}; valid: {', '.join(ABLATION_LABELS)}")


def ablation_label(config: Dict[str, Any]) -> str:
    """Inverse of :func:`ablation_variant` on a persisted config tree."""
    mode = config.get("mode")
    if mode == "datafree":
        return "base"
    if mode == "plus_cs":
        return "plus_cs"
    if mode == "star":
        return "class_specific" if config.get("inversion", {}).get("conditional", True) else "cs_guided"
    raise ConfigurationError(f"config has unknown mode {mode!r}")


@dataclass
class Cell:
    accuracies: List[float] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.accuracies)) if self.accuracies else None

    @property
    def std(self) -> Optional[float]:
        return float(np.std(self.accuracies)) if self.accuracies else None


@dataclass
class AblationReport:
    """Mean/std accuracy over seeds for each ablation row, with failure markers."""

    cells: Dict[str, Cell] = field(default_factory=lambda: {label: Cell() for label in ABLATION_LABELS})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "config": label,
                    "mean_acc": cell.mean,
                    "std_acc": cell.std,
                    "n_seeds": len(cell.accuracies),
                    "failed": len(cell.failures),
                }
                for label, cell in self.cells.items()
            ]
        )

    def save(self, directory: PathLike) -> Path:
        """Write ``ablation.csv`` and ``ablation.json`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(directory / "ablation.csv", index=False)
        tree = {label: dataclasses.asdict(cell) for label, cell in self.cells.items()}
        (directory / "ablation.json").write_text(json.dumps(tree, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return directory / "ablation.csv"


def run_ablation(
    base: "RunConfig",
    seeds: Sequence[int],
    runner: Optional[Runner] = None,
    out_dir: Optional[PathLike] = None,
) -> AblationReport:
    """Run the four ablation configurations over ``seeds``.

    A failing run is recorded as a failure marker in its cell; the remaining
    runs still complete.
    """
    runner = runner or _default_runner
    if len(seeds) < 3:
        logger.warning("ablation cells aggregate %d seed(s); at least 3 are expected", len(seeds))
    report = AblationReport()
    for label in ABLATION_LABELS:
        for seed in seeds:
            cfg = ablation_variant(base, label, seed)
            try:
                report.cells[label].accuracies.append(run_accuracy(runner(cfg)))
            except Exception as e:  # noqa: BLE001
                logger.error("ablation %s seed %d failed: %s", label, seed, e)
                report.cells[label].failures.append(f"seed {seed}: {e}")
    report.save(out_dir or Path(base.harness.out_dir) / f"ablation-{config_hash(to_tree(base))}")
    return report


def ablation_from_runs(run_dirs: Iterable[PathLike]) -> AblationReport:
    """Rebuild an ablation report from persisted run directories."""
    report = AblationReport()
    for run_dir in run_dirs:
        run = load_run(run_dir)
        report.cells[ablation_label(run.config)].accuracies.append(run.best_accuracy)
    return report


def scaling_path(base: "RunConfig", spc: int) -> Path:
    path = Path(base.harness.condensed_template.format(spc=spc))
    return path if path.is_absolute() else Path(base.harness.out_dir) / path


def _completed_std(accuracies: pd.Series) -> float:
    completed = accuracies.dropna()
    return float(np.std(completed)) if len(completed) else float("nan")


def _failed(accuracies: pd.Series) -> int:
    return int(accuracies.isna().sum())


def scaling_frame(records: List[Dict[str, Any]]) -> pd.DataFrame:
    """Reduce (spc, mode, accuracy) records to one row per (spc, mode).

    A failed run carries a NaN accuracy; it is counted under ``failed`` and
    left out of the mean and std.
    """
    frame = pd.DataFrame(records, columns=["spc", "mode", "accuracy"])
    table = (
        frame.groupby(["spc", "mode"], sort=True)["accuracy"]
        .agg(mean_acc="mean", std_acc=_completed_std, n_seeds="count", failed=_failed)
        .reset_index()
    )
    return table


def save_scaling(table: pd.DataFrame, directory: PathLike) -> Path:
    """Write ``scaling.csv`` and ``scaling.png`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table.to_csv(directory / "scaling.csv", index=False)
    fig, ax = plt.subplots(figsize=(5, 4))
    for mode, group in table.groupby("mode", sort=True):
        ax.errorbar(group["spc"], group["mean_acc"], yerr=group["std_acc"], marker="o", capsize=3, label=mode)
    ax.set_xscale("log")
    ax.set_xlabel("samples per class")
    ax.set_ylabel("student accuracy")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(directory / "scaling.png", dpi=150)
    plt.close(fig)
    return directory / "scaling.csv"


def run_scaling_study(
    base: "RunConfig",
    spc_list: Sequence[int],
    seeds: Sequence[int],
    runner: Optional[Runner] = None,
    out_dir: Optional[PathLike] = None,
) -> pd.DataFrame:
    """Accuracy of ``plus_cs`` and ``star`` for each condensed-set size.

    A failing run is logged and counted in its row's ``failed`` column; the
    remaining runs still complete.

    Raises:
        ArtifactMissingError: the condensed set for some spc does not exist.
    """
    runner = runner or _default_runner
    paths = {spc: scaling_path(base, spc) for spc in spc_list}
    missing = [str(p) for p in paths.values() if not (p / "meta.json").is_file()]
    if missing:
        raise ArtifactMissingError(f"condensed set(s) missing for the scaling study: {', '.join(missing)}")
    records = []
    for spc, path in paths.items():
        guidance = dataclasses.replace(base.guidance, mode="condensed", path=str(path), spc=spc)
        for mode in SCALING_MODES:
            for seed in seeds:
                cfg = dataclasses.replace(base, mode=mode, guidance=guidance, seed=seed)
                try:
                    accuracy = run_accuracy(runner(cfg))
                except Exception as e:  # noqa: BLE001
                    logger.error("scaling spc %d %s seed %d failed: %s", spc, mode, seed, e)
                    accuracy = float("nan")
                records.append({"spc": spc, "mode": mode, "accuracy": accuracy})
    table = scaling_frame(records)
    save_scaling(table, out_dir or Path(base.harness.out_dir) / f"scaling-{config_hash(to_tree(base))}")
    return table


def _run_spc(run: RunMetrics) -> int:
    guidance = run.config.get("guidance", {})
    if guidance.get("spc") is not None:
        return int(guidance["spc"])
    if guidance.get("path"):
        meta = json.loads((Path(guidance["path"]) / "meta.json").read_text(encoding="utf-8"))
        if meta.get("spc") is not None:
            return int(meta["spc"])
    raise ConfigurationError(f"cannot tell the guidance spc of run {run.run_dir}")


def scaling_from_runs(run_dirs: Iterable[PathLike]) -> pd.DataFrame:
    """Rebuild the scaling table from persisted run directories."""
    records = []
    for run_dir in run_dirs:
        run = load_run(run_dir)
        records.append({"spc": _run_spc(run), "mode": run.mode, "accuracy": run.best_accuracy})
    return scaling_frame(records)


def run_guidance_baseline(
    cfg: "RunConfig",
    guidance: Optional[LabeledImageSet] = None,
    eval_data: Optional[LabeledImageSet] = None,
) -> float:
    """Train the student architecture on the guidance set alone, with labels.

    This is the lower bound the distillation modes are compared against. The
    accuracy is written to ``baseline.json`` under the output root.
    """
    if cfg.seed is None:
        raise ConfigurationError("seed is mandatory: set 'seed' in the config or pass --seed")
    if guidance is None:
        if cfg.guidance.mode != "condensed" or not cfg.guidance.path:
            raise ConfigurationError("the guidance baseline needs guidance.mode=condensed and guidance.path")
        guidance = load_condensed(cfg.guidance.path)
    if eval_data is None:
        eval_data = load_dataset(
            cfg.dataset.name, cfg.dataset.root, train=False, subset_size=cfg.dataset.test_subset_size, seed=cfg.seed
        )
    input_shape = guidance.shape
    if cfg.teacher.checkpoint:
        input_shape = tuple(read_meta(cfg.teacher.checkpoint)["input_shape"])
    spec = ClassifierSpec(arch_id=cfg.student.arch, num_classes=guidance.num_classes, input_shape=input_shape)
    hp = dataclasses.replace(cfg.harness.baseline, seed=derive_seed(cfg.seed, "baseline"))
    _, accuracy = train_classifier(spec, guidance, hp, eval_data=eval_data, device=resolve_device(cfg.device))
    out = Path(cfg.harness.out_dir) / f"baseline-{config_hash(to_tree(cfg))}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "baseline.json").write_text(
        json.dumps({"accuracy": accuracy, "guidance_size": len(guidance), "seed": cfg.seed}, indent=2) + "\n",
        encoding="utf-8",
    )
    logger.info("guidance-only baseline: accuracy %.4f on %d records", accuracy, len(guidance))
    return accuracy
