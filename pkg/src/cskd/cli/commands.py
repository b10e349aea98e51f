"""Command-line entry points: train-teacher, condense, distill, report and fetch.

Every command is fully determined by its resolved ``RunConfig``: built-in
defaults, then the ``--config`` JSON file, then dedicated flags, then
``--set key.path=value`` overrides. Errors surface as one log line and a
nonzero exit status.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

from src.cskd.cli.context import MODES, RunConfig
from src.cskd.context import apply_overrides, from_tree, set_path, to_tree
from src.cskd.distill.loop import run_distillation
from src.cskd.errors import CSKDError, ConfigurationError
from src.cskd.guidance.condense import condense_dm
from src.cskd.guidance.dataset import LabeledImageSet, fetch_dataset, load_dataset
from src.cskd.guidance.fewshot import sample_few_shot
from src.cskd.guidance.storage import load_condensed, save_condensed
from src.cskd.harness.projection import project_sets, save_projection
from src.cskd.harness.samples import save_class_grid
from src.cskd.harness.studies import (
    ablation_from_runs,
    run_ablation,
    run_guidance_baseline,
    run_scaling_study,
    save_scaling,
    scaling_from_runs,
    scaling_path,
)
from src.cskd.models.checkpoint import load_checkpoint
from src.cskd.models.classifiers import ClassifierSpec, build_classifier
from src.cskd.models.training import train_teacher
from src.cskd.utils import config_hash, derive_seed, resolve_device, seeded_build

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted config keys set by the dedicated flags of ``args.command``."""
    flags: Dict[str, Any] = {}
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.out is not None:
        flags["harness.out_dir"] = args.out
    for name, key in (("dataset", "dataset.name"), ("data_root", "dataset.root"), ("device", "device")):
        if getattr(args, name, None) is not None:
            flags[key] = getattr(args, name)
    if args.command == "train-teacher":
        if args.arch is not None:
            flags["teacher.arch"] = args.arch
        if args.epochs is not None:
            flags["teacher.train.epochs"] = args.epochs
        if args.checkpoint is not None:
            flags["teacher.checkpoint"] = args.checkpoint
    elif args.command == "condense":
        if args.spc is not None:
            flags["guidance.spc"] = args.spc
        if args.method is not None:
            flags["guidance.method"] = args.method
        if args.steps is not None:
            flags["guidance.steps"] = args.steps
        if args.path is not None:
            flags["guidance.path"] = args.path
        if args.teacher is not None:
            flags["teacher.checkpoint"] = args.teacher
    elif args.command == "distill":
        if args.mode is not None:
            flags["mode"] = args.mode
        if args.teacher is not None:
            flags["teacher.checkpoint"] = args.teacher
        if args.epochs is not None:
            flags["kd.epochs"] = args.epochs
        if args.guidance is not None:
            flags.update(parse_guidance_flag(args.guidance))
    return flags


def parse_guidance_flag(text: str) -> Dict[str, Any]:
    """Translate ``none``, ``condensed:PATH`` or ``fewshot:SPC`` into config keys."""
    kind, _, value = text.partition(":")
    if kind == "none" and not value:
        return {"guidance.mode": "none"}
    if kind == "condensed" and value:
        return {"guidance.mode": "condensed", "guidance.path": value}
    if kind == "fewshot" and value:
        try:
            spc = int(value)
        except ValueError:
            raise ConfigurationError(f"--guidance fewshot:SPC needs an integer, got {value!r}") from None
        return {"guidance.mode": "fewshot", "guidance.spc": spc}
    raise ConfigurationError(f"--guidance must be none, condensed:PATH or fewshot:SPC, got {text!r}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then ``--config``, then dedicated flags, then ``--set`` overrides."""
    tree: Dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            tree = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(tree, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
    for key, value in _flag_overrides(args).items():
        set_path(tree, key.split("."), value)
    tree = apply_overrides(tree, args.overrides or [])
    return from_tree(RunConfig, tree)


def _teacher_spec(cfg: RunConfig, data: LabeledImageSet) -> ClassifierSpec:
    return ClassifierSpec(arch_id=cfg.teacher.arch, num_classes=data.num_classes, input_shape=data.shape)


def _train_data(cfg: RunConfig) -> LabeledImageSet:
    return load_dataset(cfg.dataset.name, cfg.dataset.root, train=True, subset_size=cfg.dataset.subset_size, seed=cfg.seed)


def _test_data(cfg: RunConfig) -> LabeledImageSet:
    return load_dataset(
        cfg.dataset.name, cfg.dataset.root, train=False, subset_size=cfg.dataset.test_subset_size, seed=cfg.seed
    )


def cmd_train_teacher(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.validate("train-teacher")
    checkpoint = cfg.teacher.checkpoint or str(Path(cfg.harness.out_dir) / f"teacher-{config_hash(to_tree(cfg))}")
    data, test = _train_data(cfg), _test_data(cfg)
    hp = dataclasses.replace(cfg.teacher.train, seed=derive_seed(cfg.seed, "teacher"))
    _, accuracy = train_teacher(
        _teacher_spec(cfg, data), data, hp, checkpoint_dir=checkpoint, eval_data=test, device=resolve_device(cfg.device)
    )
    print(f"teacher {cfg.teacher.arch} accuracy {accuracy:.4f} -> {checkpoint}")
    return 0


def _reference_model(cfg: RunConfig, data: LabeledImageSet):
    device = resolve_device(cfg.device)
    if cfg.guidance.reference == "teacher":
        if not cfg.teacher.checkpoint:
            raise ConfigurationError("guidance.reference=teacher requires teacher.checkpoint (or --teacher)")
        model, _ = load_checkpoint(cfg.teacher.checkpoint, device=device)
        return model
    model = seeded_build(derive_seed(cfg.seed, "reference"), lambda: build_classifier(_teacher_spec(cfg, data)))
    model.set_normalization(data.meta.mean, data.meta.std)
    return model.to(device)


def cmd_condense(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.validate("condense")
    spc = cfg.guidance.spc
    path = Path(cfg.guidance.path) if cfg.guidance.path else scaling_path(cfg, spc)
    data = _train_data(cfg)
    if cfg.guidance.method == "fewshot":
        condensed = sample_few_shot(data, spc, derive_seed(cfg.seed, "fewshot"))
    else:
        condensed = condense_dm(
            data.to(resolve_device(cfg.device)),
            spc,
            _reference_model(cfg, data),
            cfg.guidance.steps,
            derive_seed(cfg.seed, "condense"),
            lr_img=cfg.guidance.lr_img,
            batch_real=cfg.guidance.batch_real,
        )
    save_condensed(condensed.to("cpu"), path)
    print(f"{cfg.guidance.method} set: {len(condensed)} records ({spc} per class) -> {path}")
    return 0


def cmd_distill(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.validate("distill")
    result = run_distillation(cfg)
    print(f"{cfg.mode} best accuracy {result.best_accuracy:.4f} (epoch {result.best_epoch}) -> {result.run_dir}")
    return 0


def _report_dir(cfg: RunConfig, args: argparse.Namespace, kind: str) -> Path:
    return Path(args.report_out) if args.report_out else Path(cfg.harness.out_dir) / "reports" / kind


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> int:
    kind = args.kind
    if kind == "ablation":
        if args.run_dirs:
            report = ablation_from_runs(args.run_dirs)
            target = report.save(_report_dir(cfg, args, kind))
        else:
            cfg.validate("distill")
            report = run_ablation(cfg, cfg.harness.seeds, out_dir=args.report_out)
            target = None
        print(report.to_frame().to_string(index=False))
        if target is not None:
            print(f"-> {target}")
        return 0
    if kind == "scaling":
        if args.run_dirs:
            table = scaling_from_runs(args.run_dirs)
            target = save_scaling(table, _report_dir(cfg, args, kind))
            print(f"-> {target}")
        else:
            cfg.validate("distill")
            table = run_scaling_study(cfg, cfg.harness.spc_list, cfg.harness.seeds, out_dir=args.report_out)
        print(table.to_string(index=False))
        return 0
    if kind == "tsne":
        model, _ = load_checkpoint(args.checkpoint, device=resolve_device(cfg.device))
        sets = {}
        for stored in args.sets:
            data = load_condensed(stored)
            sets[f"{data.meta.source}:{Path(stored).name}"] = data
        method = args.method or cfg.harness.projection
        projection = project_sets(model, sets, method=method, seed=cfg.seed if cfg.seed is not None else 0)
        target = save_projection(projection, _report_dir(cfg, args, kind), stem=method)
        print(f"{method} projection of {len(projection.labels)} points -> {target}")
        return 0
    if kind == "samples":
        target = _report_dir(cfg, args, kind)
        seed = cfg.seed if cfg.seed is not None else 0
        for stored in args.sets:
            data = load_condensed(stored)
            path = save_class_grid(data, target, stem=Path(stored).name, per_class=args.per_class, seed=seed)
            print(f"{data.meta.source} set of {len(data)} records -> {path}")
        return 0
    if kind == "baseline":
        accuracy = run_guidance_baseline(cfg)
        print(f"guidance-only baseline accuracy {accuracy:.4f}")
        return 0
    raise ConfigurationError(f"unknown report {kind!r}")


def cmd_fetch(cfg: RunConfig, args: argparse.Namespace) -> int:
    fetch_dataset(cfg.dataset.name, cfg.dataset.root)
    print(f"{cfg.dataset.name} -> {cfg.dataset.root}")
    return 0


# Register all commands
COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "train-teacher": cmd_train_teacher,
    "condense": cmd_condense,
    "distill": cmd_distill,
    "report": cmd_report,
    "fetch": cmd_fetch,
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)"
    )
    parser.add_argument("--seed", type=int, help="base seed of every stochastic step")
    parser.add_argument("--out", help="output root (harness.out_dir)")
    parser.add_argument("--dataset", help="mnist, fashionmnist or cifar10")
    parser.add_argument("--data-root", dest="data_root", help="directory of the dataset archives")
    parser.add_argument("--device", help="cpu, cuda, cuda:N or auto")
    parser.add_argument("--dry-run", action="store_true", help="resolve and validate the config, then stop")
    parser.add_argument("--print-config", action="store_true", help="print the resolved config and stop")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (env CSKD_LOG_LEVEL)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cskd", description="Condensed-sample guided data-free distillation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train a teacher classifier on a built-in dataset")
    _common(p)
    p.add_argument("--arch", help="teacher architecture id")
    p.add_argument("--epochs", type=int)
    p.add_argument("--checkpoint", help="checkpoint directory to write")

    p = sub.add_parser("condense", help="build a condensed or few-shot guidance set")
    _common(p)
    p.add_argument("--spc", type=int, help="samples per class")
    p.add_argument("--method", choices=("dm", "fewshot"))
    p.add_argument("--steps", type=int, help="distribution-matching steps")
    p.add_argument("--path", help="directory to write the set to")
    p.add_argument("--teacher", help="teacher checkpoint used as the feature extractor")

    p = sub.add_parser("distill", help="distill a student from a teacher checkpoint")
    _common(p)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--guidance", help="none, condensed:PATH or fewshot:SPC")
    p.add_argument("--teacher", help="teacher checkpoint directory")
    p.add_argument("--epochs", type=int, help="distillation epochs")

    p = sub.add_parser("report", help="ablation, scaling, projection, sample-grid or baseline reports")
    _common(p)
    p.add_argument("--report-out", dest="report_out", help="report directory")
    kinds = p.add_subparsers(dest="kind", required=True)
    k = kinds.add_parser("ablation", help="ablation table from run directories (or run the study)")
    k.add_argument("run_dirs", nargs="*")
    k = kinds.add_parser("scaling", help="accuracy against condensed-set size")
    k.add_argument("run_dirs", nargs="*")
    k = kinds.add_parser("tsne", help="2-D projection of penultimate features of stored sets")
    k.add_argument("checkpoint")
    k.add_argument("sets", nargs="+")
    k.add_argument("--method", choices=("pca", "tsne"))
    k = kinds.add_parser("samples", help="per-class image grids of stored sets")
    k.add_argument("sets", nargs="+")
    k.add_argument("--per-class", dest="per_class", type=int, default=8, help="images per class row")
    kinds.add_parser("baseline", help="train the student on the guidance set alone")

    p = sub.add_parser("fetch", help="download a built-in dataset (the only networked command)")
    _common(p)
    return parser


def configure_logging(level: Optional[str]) -> None:
    level = (level or os.getenv("CSKD_LOG_LEVEL") or "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "INFO"
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the command and return its exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            print(json.dumps(to_tree(cfg), indent=2, sort_keys=True))
            return 0
        if args.dry_run:
            if args.command in ("train-teacher", "condense", "distill"):
                cfg.validate(args.command)
            print(f"config ok: {args.command} {config_hash(to_tree(cfg))}")
            return 0
        return COMMANDS[args.command](cfg, args)
    except CSKDError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 1
    except NotImplementedError as e:
        logger.error("not implemented: %s", e)
        return 1
    except KeyboardInterrupt:
        logger.error("interrupted")
        return 130
