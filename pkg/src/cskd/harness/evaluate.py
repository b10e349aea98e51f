"""Top-1 accuracy of a classifier on a labeled set."""

from __future__ import annotations

import torch

from src.cskd.errors import ConfigurationError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.models.classifiers import Classifier


@torch.no_grad()
def evaluate_accuracy(model: Classifier, data: LabeledImageSet, batch_size: int = 512) -> float:
    """Fraction of records whose argmax prediction equals the label, in [0, 1].

    The model is evaluated in eval mode and its previous mode is restored.
    """
    if len(data) == 0:
        raise ConfigurationError("cannot evaluate on an empty set")
    was_training = model.training
    model.eval()
    device = next(model.parameters()).device
    correct = 0
    for start in range(0, len(data), batch_size):
        images = data.images[start : start + batch_size].to(device)
        labels = data.labels[start : start + batch_size].to(device)
        correct += int((model(images).argmax(dim=1) == labels).sum())
    model.train(was_training)
    return correct / len(data)
