"""Class-wise feature alignment between synthetic and guidance samples."""

from __future__ import annotations

import math

import torch

from src.cskd.errors import InsufficientDataError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.guidance.stats import ClassFeatureStats, class_feature_stats, feature_class_stats
from src.cskd.models.classifiers import Classifier


def alignment_from_stats(synth: ClassFeatureStats, guide: ClassFeatureStats, strict: bool = True) -> float:
    """Mean over classes of ``||mu_synth,k - mu_guide,k||_2``.

    Args:
        synth: Class statistics of the synthetic samples.
        guide: Class statistics of the guidance samples.
        strict: Require both sides to cover the same classes. When false the
            mean runs over the classes both sides cover (NaN if there are none).

    Raises:
        InsufficientDataError: ``strict`` and the class coverage differs.
    """
    synth_present, guide_present = set(synth.present), set(guide.present)
    if strict and synth_present != guide_present:
        missing = {c: 0 for c in sorted(synth_present ^ guide_present)}
        raise InsufficientDataError("synthetic and guidance sets cover different classes", missing)
    shared = sorted(synth_present & guide_present)
    if not shared:
        return math.nan
    gaps = (synth.means[shared] - guide.means[shared]).norm(dim=1)
    return float(gaps.mean())


def alignment_from_features(
    synth_features: torch.Tensor,
    synth_labels: torch.Tensor,
    guide_features: torch.Tensor,
    guide_labels: torch.Tensor,
    num_classes: int,
    strict: bool = True,
) -> float:
    return alignment_from_stats(
        feature_class_stats(synth_features, synth_labels, num_classes),
        feature_class_stats(guide_features, guide_labels, num_classes),
        strict=strict,
    )


def class_alignment_metric(
    model: Classifier,
    synth: LabeledImageSet,
    guide: LabeledImageSet,
    strict: bool = True,
) -> float:
    """Class-mean distance between ``synth`` and ``guide`` in ``model``'s penultimate space.

    Nonnegative, and 0 exactly when every class mean coincides.
    """
    return alignment_from_stats(class_feature_stats(model, synth), class_feature_stats(model, guide), strict=strict)
