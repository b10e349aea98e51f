"""Base model-inversion backends.

A backend turns a generated batch into the data-free loss components
(``conf``, ``adv`` and optionally ``bn``). The feature-alignment term is added
on top by the inverter and never depends on which backend is active.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, Tuple

import torch

from src.cskd.errors import RegistryError
from src.cskd.inversion.losses import adversarial_divergence_loss, bn_alignment_loss, confidence_loss
from src.cskd.models.classifiers import Classifier
from src.cskd.models.introspection import BatchStatsHook, bn_statistics

logger = logging.getLogger(__name__)

Parts = Dict[str, torch.Tensor]


class InversionBackend:
    """Confidence plus teacher-student divergence (the ``plain_ce`` objective)."""

    name = "plain_ce"

    def __init__(self, teacher: Classifier) -> None:
        self.teacher = teacher

    def teacher_forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, Parts]:
        return self.teacher(images), {}

    def losses(self, images: torch.Tensor, y_ps: torch.Tensor, student: Classifier) -> Tuple[Parts, torch.Tensor]:
        """Compute the base loss components on ``images``.

        Returns:
            ``(parts, teacher_logits)``.
        """
        teacher_logits, parts = self.teacher_forward(images)
        parts["conf"] = confidence_loss(teacher_logits, y_ps)
        parts["adv"] = adversarial_divergence_loss(teacher_logits, student(images))
        return parts, teacher_logits


class DeepInversionBackend(InversionBackend):
    """Adds the batch-norm statistics term; dropped when the teacher has no batch norm."""

    name = "deepinv"

    def __init__(self, teacher: Classifier) -> None:
        super().__init__(teacher)
        self.bn_stats = bn_statistics(teacher)
        if self.bn_stats.is_empty:
            logger.warning("deepinv backend: teacher has no batch norm, BN term disabled")

    def teacher_forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, Parts]:
        if self.bn_stats.is_empty:
            return self.teacher(images), {}
        with BatchStatsHook(self.teacher) as hook:
            logits = self.teacher(images)
        stats = [(m.to(images.device), v.to(images.device)) for m, v in self.bn_stats.layers]
        self.bn_stats.layers = stats
        return logits, {"bn": bn_alignment_loss(self.bn_stats, hook.stats)}


class _Unsupported(InversionBackend):
    def __init__(self, teacher: Classifier) -> None:
        raise NotImplementedError(
            f"the {self.name} backend is an interface slot only; use plain_ce or deepinv"
        )


class ContrastiveBackend(_Unsupported):
    name = "cmi"


class MemoryReplayBackend(_Unsupported):
    name = "pre_dfkd"


# Register all backends
BACKENDS: Dict[str, Callable[[Classifier], InversionBackend]] = {
    "plain_ce": InversionBackend,
    "deepinv": DeepInversionBackend,
    "cmi": ContrastiveBackend,
    "pre_dfkd": MemoryReplayBackend,
}


def build_backend(name: str, teacher: Classifier) -> InversionBackend:
    """Instantiate the backend registered under ``name``.

    Raises:
        RegistryError: unknown backend.
        NotImplementedError: the backend is a stub.
    """
    factory = BACKENDS.get(name)
    if factory is None:
        raise RegistryError("inversion backend", name, BACKENDS)
    return factory(teacher)
