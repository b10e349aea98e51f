"""Per-class statistics of penultimate features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import torch

from src.cskd.errors import ConfigurationError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.models.classifiers import Classifier


@dataclass
class ClassFeatureStats:
    """Class-wise mean feature (float64, shape (nc, d)) and record count.

    Rows of classes with no records are zero and listed in ``missing``.
    """

    means: torch.Tensor
    counts: torch.Tensor

    @property
    def missing(self) -> List[int]:
        return [c for c, n in enumerate(self.counts.tolist()) if n == 0]

    @property
    def present(self) -> List[int]:
        return [c for c, n in enumerate(self.counts.tolist()) if n > 0]


def feature_class_stats(features: torch.Tensor, labels: torch.Tensor, num_classes: int) -> ClassFeatureStats:
    """Per-class means of already-extracted ``features``."""
    features = features.detach().to(torch.float64)
    labels = labels.to(features.device).long()
    sums = torch.zeros(num_classes, features.shape[1], dtype=torch.float64, device=features.device)
    sums.index_add_(0, labels, features)
    counts = torch.bincount(labels, minlength=num_classes)
    means = sums / counts.clamp_min(1).unsqueeze(1).to(torch.float64)
    return ClassFeatureStats(means.cpu(), counts.cpu())


@torch.no_grad()
def extract_features(model: Classifier, data: LabeledImageSet, batch_size: int = 512) -> torch.Tensor:
    """Penultimate features of every record, in eval mode."""
    was_training = model.training
    model.eval()
    device = next(model.parameters()).device
    chunks = [
        model.penultimate(data.images[i : i + batch_size].to(device)).cpu()
        for i in range(0, len(data), batch_size)
    ]
    model.train(was_training)
    return torch.cat(chunks)


def class_feature_stats(model: Classifier, data: LabeledImageSet, batch_size: int = 512) -> ClassFeatureStats:
    """Per-class mean penultimate feature and count of ``data`` under ``model``.

    Raises:
        ConfigurationError: ``data`` is empty.
    """
    if len(data) == 0:
        raise ConfigurationError("class_feature_stats needs a non-empty set")
    return feature_class_stats(extract_features(model, data, batch_size), data.labels, data.num_classes)
