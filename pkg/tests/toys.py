"""Tiny separable datasets shared by the test modules."""

import dataclasses
import json

import torch

from src.cskd.cli.context import HarnessContext, RunConfig, StudentContext
from src.cskd.context import to_tree
from src.cskd.distill.metrics import MetricsRow, MetricsWriter
from src.cskd.guidance.dataset import LabeledImageSet, SetMeta
from src.cskd.utils import make_generator

TOY_SHAPE = (1, 8, 8)
TOY_CLASSES = 3


def make_toy_set(per_class: int = 16, num_classes: int = TOY_CLASSES, seed: int = 0, source: str = "real") -> LabeledImageSet:
    """Class c lights up horizontal band c on a noisy background."""
    gen = make_generator(seed)
    c, h, w = TOY_SHAPE
    labels = torch.arange(num_classes).repeat_interleave(per_class)
    images = torch.rand(len(labels), c, h, w, generator=gen) * 0.2
    band = h // num_classes
    for i, label in enumerate(labels.tolist()):
        images[i, :, label * band : (label + 1) * band, :] += 0.7
    meta = SetMeta(dataset_name="toy", num_classes=num_classes, source=source)
    return LabeledImageSet(images.clamp(0.0, 1.0), labels, meta)


def toy_run_config(out_dir, **changes):
    """A seeded cpu run config with an mlp student writing under ``out_dir``."""
    cfg = RunConfig(
        seed=0,
        device="cpu",
        student=StudentContext(arch="mlp"),
        harness=HarnessContext(out_dir=str(out_dir), seeds=[0, 1, 2]),
    )
    return dataclasses.replace(cfg, **changes)


def metrics_row(epoch, acc, mode="star"):
    return MetricsRow(epoch=epoch, mode=mode, student_acc=acc, loss_g=1.0, loss_d=None, loss_kd=0.5, align_dist=None, seed=0)


def write_fake_run(run_dir, cfg, accuracies):
    """A run directory holding ``cfg`` and one metrics row per accuracy."""
    run_dir.mkdir(parents=True)
    (run_dir / "config.json").write_text(json.dumps(to_tree(cfg)))
    writer = MetricsWriter(run_dir / "metrics.jsonl")
    for epoch, acc in enumerate(accuracies):
        writer.write(metrics_row(epoch, acc, cfg.mode))
    return run_dir
