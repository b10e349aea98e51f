"""The distillation epoch loop.

Each round generates a batch by model inversion, appends it to the pool,
draws a uniform batch from the pool and takes one student step on the KD loss
against the teacher's predictions for that batch. The pool starts out holding
the guidance set, so condensed and synthetic records are mixed from the very
first update.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional

import torch
from tqdm.auto import tqdm

from src.cskd.context import to_tree
from src.cskd.distill.context import KDConfig
from src.cskd.distill.losses import kd_loss
from src.cskd.distill.metrics import MetricsRow, MetricsWriter
from src.cskd.distill.pool import SyntheticPool
from src.cskd.errors import ConfigurationError, NumericalError
from src.cskd.guidance.dataset import LabeledImageSet, SetMeta, load_dataset
from src.cskd.guidance.fewshot import sample_few_shot
from src.cskd.guidance.stats import ClassFeatureStats, extract_features, feature_class_stats
from src.cskd.guidance.storage import load_condensed, save_condensed
from src.cskd.harness.alignment import alignment_from_stats
from src.cskd.harness.evaluate import evaluate_accuracy
from src.cskd.inversion.step import ModelInverter, SyntheticBatch
from src.cskd.models.checkpoint import load_checkpoint, save_checkpoint
from src.cskd.models.classifiers import Classifier, ClassifierSpec, build_classifier
from src.cskd.utils import config_hash, configure_determinism, derive_seed, resolve_device, seeded_build

if TYPE_CHECKING:
    from src.cskd.cli.context import RunConfig

logger = logging.getLogger(__name__)


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return value


class Distiller:
    """Owns the pool, the student optimiser and the best-student bookkeeping.

    Args:
        teacher: Frozen teacher.
        student: Student to train in place.
        inverter: Generator/discriminator owner.
        kd: Student optimisation settings.
        eval_data: Labeled set for ``student_acc``.
        mode: Mode label written into every metrics row.
        seed: Base seed of the loop.
        pool_guidance: Records the pool is pre-seeded with.
        inversion_guidance: Records steering the discriminator; ``None`` keeps
            inversion data-free.
        probe: Labeled set for ``align_dist``; ``None`` writes ``null``.
        record_wall_time: Write ``wall_ms`` instead of ``null``.
        device: Where training happens.
    """

    def __init__(
        self,
        teacher: Classifier,
        student: Classifier,
        inverter: ModelInverter,
        kd: KDConfig,
        eval_data: LabeledImageSet,
        *,
        mode: str,
        seed: int,
        pool_guidance: Optional[LabeledImageSet] = None,
        inversion_guidance: Optional[LabeledImageSet] = None,
        probe: Optional[LabeledImageSet] = None,
        record_wall_time: bool = False,
        device: str | torch.device = "cpu",
    ) -> None:
        self.teacher = teacher.eval()
        self.student = student
        self.inverter = inverter
        self.kd = kd
        self.eval_data = eval_data
        self.mode = mode
        self.seed = seed
        self.inversion_guidance = inversion_guidance
        self.record_wall_time = record_wall_time
        self.device = torch.device(device)

        self.pool = SyntheticPool(kd.pool_capacity, device=self.device)
        if pool_guidance is not None:
            self.pool.add(pool_guidance)
        self.guidance_size = len(self.pool)

        self.probe_stats: Optional[ClassFeatureStats] = None
        if probe is not None and len(probe):
            self.probe_stats = feature_class_stats(extract_features(teacher, probe), probe.labels, probe.num_classes)

        self.optimizer = torch.optim.SGD(
            student.parameters(), lr=kd.student_lr, momentum=kd.momentum, weight_decay=kd.weight_decay
        )
        self.scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            self.optimizer, T_max=max(1, kd.epochs * kd.student_steps_per_epoch)
        )
        self.last_batch: Optional[SyntheticBatch] = None
        self.best_accuracy = -1.0
        self.best_epoch = -1
        self.best_state: Optional[Dict[str, torch.Tensor]] = None

    def _student_update(self, seed: int, step: int) -> float:
        batch = self.pool.sample(self.kd.batch_size, seed)
        images = batch.images.to(self.device)
        with torch.no_grad():
            teacher_logits = self.teacher(images)
        self.student.train()
        loss = kd_loss(self.student(images), teacher_logits, self.kd.temperature, self.kd.kl_direction)
        if not torch.isfinite(loss):
            raise NumericalError("KD loss is non-finite", {"loss_kd": loss.item()}, index=step)
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.scheduler.step()
        return loss.item()

    def alignment(self, batch: SyntheticBatch) -> Optional[float]:
        """Class-mean distance of ``batch`` to the probe set over the classes both cover."""
        if self.probe_stats is None:
            return None
        with torch.no_grad():
            features = self.teacher.penultimate(batch.images.to(self.device))
        stats = feature_class_stats(features, batch.pseudo_labels, self.teacher.num_classes)
        return _finite_or_none(alignment_from_stats(stats, self.probe_stats, strict=False))

    def distill_epoch(self, epoch: int) -> MetricsRow:
        """Run ``student_steps_per_epoch`` rounds, apply the reset policy and build the metrics row."""
        started = time.perf_counter()
        epoch_seed = derive_seed(self.seed, "epoch", epoch)
        loss_g: List[float] = []
        loss_d: List[float] = []
        loss_kd: List[float] = []
        for step in range(self.kd.student_steps_per_epoch):
            step_seed = derive_seed(epoch_seed, "step", step)
            batch, losses = self.inverter.invert_step(
                self.student, self.inversion_guidance, derive_seed(step_seed, "invert")
            )
            self.pool.add(batch)
            loss_kd.append(self._student_update(derive_seed(step_seed, "sample"), step))
            loss_g.append(losses["loss_g"])
            if losses.get("loss_d") is not None:
                loss_d.append(losses["loss_d"])
            self.last_batch = batch
        self.inverter.maybe_reset(epoch + 1)

        accuracy = evaluate_accuracy(self.student, self.eval_data)
        if accuracy > self.best_accuracy:
            self.best_accuracy, self.best_epoch = accuracy, epoch
            self.best_state = copy.deepcopy(self.student.state_dict())
        elapsed_ms = int(round((time.perf_counter() - started) * 1000))
        row = MetricsRow(
            epoch=epoch,
            mode=self.mode,
            student_acc=accuracy,
            loss_g=sum(loss_g) / len(loss_g),
            loss_d=sum(loss_d) / len(loss_d) if loss_d else None,
            loss_kd=sum(loss_kd) / len(loss_kd),
            align_dist=self.alignment(self.last_batch),
            seed=self.seed,
            wall_ms=elapsed_ms if self.record_wall_time else None,
        )
        logger.info(
            "epoch %d [%s]: acc %.4f loss_g %.4f loss_kd %.4f pool %d (%d ms)",
            epoch, self.mode, accuracy, row.loss_g, row.loss_kd, len(self.pool), elapsed_ms,
        )
        return row

    def run(self, writer: Optional[MetricsWriter] = None) -> List[MetricsRow]:
        rows = []
        for epoch in tqdm(range(self.kd.epochs), desc=f"distill {self.mode}", leave=False):
            row = self.distill_epoch(epoch)
            if writer is not None:
                writer.write(row)
            rows.append(row)
        return rows


@dataclass
class DistillResult:
    student: Classifier
    run_dir: Path
    rows: List[MetricsRow] = field(default_factory=list)
    best_accuracy: float = 0.0
    best_epoch: int = -1

    @property
    def metrics_path(self) -> Path:
        return self.run_dir / "metrics.jsonl"


def resolve_guidance(cfg: "RunConfig", seed: int) -> Optional[LabeledImageSet]:
    """Load the condensed set or draw the few-shot subset named by ``cfg.guidance``."""
    guidance = cfg.guidance
    if guidance.mode == "condensed":
        return load_condensed(guidance.path)
    if guidance.mode == "fewshot":
        real = load_dataset(cfg.dataset.name, cfg.dataset.root, train=True, subset_size=cfg.dataset.subset_size, seed=seed)
        return sample_few_shot(real, guidance.spc, derive_seed(seed, "fewshot"))
    return None


def run_dir_for(cfg: "RunConfig") -> Path:
    return Path(cfg.harness.out_dir) / config_hash(to_tree(cfg))


def run_distillation(
    cfg: "RunConfig",
    *,
    teacher: Optional[Classifier] = None,
    guidance: Optional[LabeledImageSet] = None,
    eval_data: Optional[LabeledImageSet] = None,
    probe: Optional[LabeledImageSet] = None,
) -> DistillResult:
    """Distill a student from the configured teacher in ``datafree``, ``plus_cs`` or ``star`` mode.

    ``datafree`` ignores any guidance. ``plus_cs`` puts the guidance set in the
    pool with the alignment weight forced to 0 and the discriminator never
    trained. ``star`` also trains the discriminator on the guidance set and
    adds the feature-alignment term. The student with the best evaluation
    accuracy is checkpointed.

    Args:
        cfg: Resolved run configuration.
        teacher, guidance, eval_data, probe: Pre-loaded artifacts; when omitted
            they are read from the locations in ``cfg``.

    Returns:
        The best student and the run directory holding ``config.json``,
        ``metrics.jsonl``, ``student/`` and ``synthetic/``.

    Raises:
        ConfigurationError: missing seed or mode-specific keys.
        ArtifactMissingError: the teacher, guidance or dataset files are absent.
    """
    if teacher is None:
        cfg.validate("distill")
    elif cfg.seed is None:
        raise ConfigurationError("seed is mandatory: set 'seed' in the config or pass --seed")
    seed = cfg.kd.seed if cfg.kd.seed is not None else cfg.seed
    device = resolve_device(cfg.device)
    configure_determinism()

    if teacher is None:
        teacher, _ = load_checkpoint(cfg.teacher.checkpoint, device)
    teacher = teacher.to(device).eval()

    if cfg.mode == "datafree":
        if guidance is not None or cfg.guidance.mode != "none":
            logger.warning("mode datafree ignores the configured guidance")
        guidance = None
    elif guidance is None and cfg.uses_guidance:
        guidance = resolve_guidance(cfg, seed)

    inversion_cfg = cfg.inversion
    if cfg.mode == "plus_cs":
        inversion_cfg = dataclasses.replace(inversion_cfg, weights=dataclasses.replace(inversion_cfg.weights, fa=0.0))
    pool_guidance = guidance if cfg.kd.include_guidance_in_pool else None
    inversion_guidance = guidance if cfg.mode == "star" and inversion_cfg.w_fa > 0 else None

    if eval_data is None:
        eval_data = load_dataset(
            cfg.dataset.name, cfg.dataset.root, train=False, subset_size=cfg.dataset.test_subset_size, seed=seed
        )
    if probe is None:
        probe = load_condensed(cfg.harness.probe_path) if cfg.harness.probe_path else guidance

    spec = ClassifierSpec(arch_id=cfg.student.arch, num_classes=teacher.num_classes, input_shape=teacher.input_shape)
    student = seeded_build(derive_seed(seed, "student"), lambda: build_classifier(spec))
    student.set_normalization(teacher.norm_mean.flatten().tolist(), teacher.norm_std.flatten().tolist())
    student.to(device)
    inverter = ModelInverter(teacher, inversion_cfg, derive_seed(seed, "inversion"), device)

    run_dir = run_dir_for(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(to_tree(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("run %s: mode %s, guidance %s", run_dir, cfg.mode, len(guidance) if guidance is not None else 0)

    distiller = Distiller(
        teacher,
        student,
        inverter,
        cfg.kd,
        eval_data,
        mode=cfg.mode,
        seed=seed,
        pool_guidance=pool_guidance,
        inversion_guidance=inversion_guidance,
        probe=probe,
        record_wall_time=cfg.harness.record_wall_time,
        device=device,
    )
    rows = distiller.run(MetricsWriter(run_dir / "metrics.jsonl"))

    if distiller.best_state is not None:
        student.load_state_dict(distiller.best_state)
    best_accuracy = distiller.best_accuracy if rows else evaluate_accuracy(student, eval_data)
    student.eval()
    save_checkpoint(
        student,
        run_dir / "student",
        seed=seed,
        extra={"accuracy": best_accuracy, "epoch": distiller.best_epoch, "mode": cfg.mode},
    )
    if distiller.last_batch is not None:
        snapshot = LabeledImageSet(
            distiller.last_batch.images.clamp(0.0, 1.0).cpu(),
            distiller.last_batch.pseudo_labels.cpu(),
            SetMeta(
                dataset_name=eval_data.meta.dataset_name,
                num_classes=teacher.num_classes,
                mean=tuple(eval_data.meta.mean),
                std=tuple(eval_data.meta.std),
                source="synthetic",
            ),
        )
        save_condensed(snapshot, run_dir / "synthetic")
    return DistillResult(student, run_dir, rows, best_accuracy, distiller.best_epoch)
