"""Access to penultimate features and batch-norm statistics of classifiers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import torch
from torch import nn

from src.cskd.errors import DimensionError
from src.cskd.models.classifiers import Classifier

logger = logging.getLogger(__name__)

_BN_TYPES = (nn.BatchNorm1d, nn.BatchNorm2d, nn.BatchNorm3d)


@dataclass
class BNStatistics:
    """Per batch-norm layer (running_mean, running_var), in module order."""

    layers: List[Tuple[torch.Tensor, torch.Tensor]] = field(default_factory=list)
    names: List[str] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.layers

    def __len__(self) -> int:
        return len(self.layers)


def penultimate_features(model: Classifier, batch: torch.Tensor) -> torch.Tensor:
    """Return the (B, d_feat) activations feeding the model's final linear head.

    Raises:
        DimensionError: ``batch`` does not match the model's input shape.
    """
    return model.penultimate(batch)


def batchnorm_layers(model: nn.Module) -> List[Tuple[str, nn.modules.batchnorm._BatchNorm]]:
    return [(name, m) for name, m in model.named_modules() if isinstance(m, _BN_TYPES)]


def bn_statistics(model: nn.Module) -> BNStatistics:
    """Collect the running statistics of every batch-norm layer.

    A model without batch norm yields an empty ``BNStatistics``; callers must
    drop any loss term built on it.
    """
    stats = BNStatistics()
    for name, layer in batchnorm_layers(model):
        if layer.running_mean is None or layer.running_var is None:
            continue
        stats.layers.append((layer.running_mean.detach().clone(), layer.running_var.detach().clone()))
        stats.names.append(name)
    if stats.is_empty:
        logger.warning("%s has no batch-norm running statistics", type(model).__name__)
    return stats


class BatchStatsHook:
    """Record the per-channel mean and variance of every batch-norm input.

    Use as a context manager around a forward pass; ``stats`` then holds one
    (mean, var) pair per layer in the same order as :func:`bn_statistics`.
    """

    def __init__(self, model: nn.Module) -> None:
        self.model = model
        self.stats: List[Tuple[torch.Tensor, torch.Tensor]] = []
        self._handles: list = []

    def _hook(self, module: nn.Module, inputs: tuple, output: torch.Tensor) -> None:
        x = inputs[0]
        dims = [0] + list(range(2, x.dim()))
        self.stats.append((x.mean(dim=dims), x.var(dim=dims, unbiased=False)))

    def __enter__(self) -> "BatchStatsHook":
        self.stats = []
        for _, layer in batchnorm_layers(self.model):
            if layer.running_mean is not None:
                self._handles.append(layer.register_forward_hook(self._hook))
        return self

    def __exit__(self, *exc) -> None:
        for handle in self._handles:
            handle.remove()
        self._handles = []


def check_layer_alignment(reference: BNStatistics, observed: List[Tuple[torch.Tensor, torch.Tensor]]) -> None:
    """Raise ``DimensionError`` unless ``observed`` lines up layer by layer with ``reference``."""
    if len(reference.layers) != len(observed):
        raise DimensionError(f"expected statistics for {len(reference.layers)} BN layers, got {len(observed)}")
    for i, ((mean_r, var_r), (mean_b, var_b)) in enumerate(zip(reference.layers, observed)):
        if mean_r.shape != mean_b.shape or var_r.shape != var_b.shape:
            name = reference.names[i] if i < len(reference.names) else str(i)
            raise DimensionError(
                f"BN layer {i} ({name}) ordering mismatch: running stats of shape "
                f"{tuple(mean_r.shape)}, batch stats of shape {tuple(mean_b.shape)}"
            )
