"""Supervised training of teachers (and condensed-only students)."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset
from tqdm.auto import tqdm

from src.cskd.errors import ConfigurationError, NumericalError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.models.checkpoint import save_checkpoint
from src.cskd.models.classifiers import Classifier, ClassifierSpec, build_classifier
from src.cskd.models.context import TrainConfig
from src.cskd.utils import PathLike, derive_seed, make_generator, seeded_build

logger = logging.getLogger(__name__)


def make_optimizer(params, name: str, lr: float, weight_decay: float) -> torch.optim.Optimizer:
    if name == "adam":
        return torch.optim.Adam(params, lr=lr, weight_decay=weight_decay)
    return torch.optim.SGD(params, lr=lr, momentum=0.9, weight_decay=weight_decay, nesterov=True)


def _holdout_split(data: LabeledImageSet, fraction: float, seed: int) -> Tuple[LabeledImageSet, LabeledImageSet]:
    n_val = int(round(len(data) * fraction))
    if n_val == 0 or n_val >= len(data):
        return data, data
    order = torch.randperm(len(data), generator=make_generator(derive_seed(seed, "holdout")))
    val_idx, train_idx = torch.sort(order[:n_val])[0], torch.sort(order[n_val:])[0]
    return data.subset(train_idx), data.subset(val_idx)


def train_classifier(
    spec: ClassifierSpec,
    data: LabeledImageSet,
    hp: TrainConfig,
    eval_data: Optional[LabeledImageSet] = None,
    device: str | torch.device = "cpu",
) -> Tuple[Classifier, float]:
    """Train a fresh classifier with cross-entropy.

    Args:
        spec: Architecture to build.
        data: Training set.
        hp: Hyperparameters.
        eval_data: Held-out set; when omitted ``hp.val_fraction`` of ``data`` is held out.
        device: Where to train.

    Returns:
        The trained model (eval mode) and its held-out top-1 accuracy.

    Raises:
        NumericalError: the loss became non-finite.
    """
    from src.cskd.harness.evaluate import evaluate_accuracy

    if len(data) == 0:
        raise ConfigurationError("cannot train on an empty set")
    if eval_data is None:
        data, eval_data = _holdout_split(data, hp.val_fraction, hp.seed)

    model = seeded_build(derive_seed(hp.seed, "init"), lambda: build_classifier(spec))
    model.set_normalization(data.meta.mean, data.meta.std)
    model.to(device)

    if hp.epochs > 0:
        loader = DataLoader(
            TensorDataset(data.images, data.labels),
            batch_size=hp.batch_size,
            shuffle=True,
            generator=make_generator(derive_seed(hp.seed, "order")),
            num_workers=hp.num_workers,
            drop_last=len(data) > hp.batch_size,
        )
        optimizer = make_optimizer(model.parameters(), hp.optimizer, hp.lr, hp.weight_decay)
        scheduler = (
            torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=hp.epochs * len(loader)) if hp.cosine else None
        )
        for epoch in tqdm(range(hp.epochs), desc=f"train {spec.arch_id}", leave=False):
            model.train()
            running, seen = 0.0, 0
            for step, (images, labels) in enumerate(loader):
                images, labels = images.to(device), labels.to(device)
                loss = F.cross_entropy(model(images), labels)
                if not torch.isfinite(loss):
                    raise NumericalError(
                        f"{spec.arch_id} training diverged at epoch {epoch}", {"ce": loss.item()}, index=step
                    )
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                if scheduler is not None:
                    scheduler.step()
                running += loss.item() * len(labels)
                seen += len(labels)
            logger.info("%s epoch %d: train loss %.4f", spec.arch_id, epoch, running / max(seen, 1))

    model.eval()
    accuracy = evaluate_accuracy(model, eval_data)
    logger.info("%s held-out accuracy %.4f", spec.arch_id, accuracy)
    return model, accuracy


def train_teacher(
    spec: ClassifierSpec,
    data: LabeledImageSet,
    hp: TrainConfig,
    checkpoint_dir: Optional[PathLike] = None,
    eval_data: Optional[LabeledImageSet] = None,
    device: str | torch.device = "cpu",
) -> Tuple[Classifier, float]:
    """Train a teacher and persist it with its ``meta.json`` when ``checkpoint_dir`` is given."""
    model, accuracy = train_classifier(spec, data, hp, eval_data=eval_data, device=device)
    if math.isfinite(accuracy) and checkpoint_dir is not None:
        save_checkpoint(
            model,
            Path(checkpoint_dir),
            seed=hp.seed,
            train_hash=data.fingerprint(),
            extra={"accuracy": accuracy, "dataset_name": data.meta.dataset_name, "epochs": hp.epochs},
        )
    return model, accuracy
