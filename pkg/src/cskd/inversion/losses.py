"""Model-inversion losses.

All functions return scalar tensors and are differentiable in their tensor
arguments. Discriminator scores are raw logits; the sigmoid is folded into
``binary_cross_entropy_with_logits``.
"""

from __future__ import annotations

from typing import List, Mapping, Optional, Tuple

import torch
import torch.nn.functional as F

from src.cskd.errors import NumericalError
from src.cskd.models.discriminator import Discriminator
from src.cskd.models.introspection import BNStatistics, check_layer_alignment


def confidence_loss(teacher_logits: torch.Tensor, y_ps: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of the teacher's softmax against the pseudo-labels."""
    return F.cross_entropy(teacher_logits, y_ps)


def adversarial_divergence_loss(teacher_logits: torch.Tensor, student_logits: torch.Tensor) -> torch.Tensor:
    """Negative mean KL(softmax(teacher) || softmax(student)); never positive."""
    kl = F.kl_div(
        F.log_softmax(student_logits, dim=1),
        F.log_softmax(teacher_logits, dim=1),
        reduction="batchmean",
        log_target=True,
    )
    return -kl.clamp_min(0.0)


def bn_alignment_loss(
    bn_stats: BNStatistics,
    batch_layer_stats: List[Tuple[torch.Tensor, torch.Tensor]],
) -> torch.Tensor:
    """Sum over layers of squared distances between batch and running mean/variance.

    Raises:
        DimensionError: layer counts or per-layer widths do not line up.
    """
    check_layer_alignment(bn_stats, batch_layer_stats)
    total: Optional[torch.Tensor] = None
    for (mean_r, var_r), (mean_b, var_b) in zip(bn_stats.layers, batch_layer_stats):
        mean_r, var_r = mean_r.to(mean_b), var_r.to(var_b)
        term = (mean_b - mean_r).pow(2).sum() + (var_b - var_r).pow(2).sum()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total


def _check_finite(name: str, features: torch.Tensor) -> None:
    bad = ~torch.isfinite(features).all(dim=1)
    if bad.any():
        raise NumericalError(f"non-finite {name} features", index=int(torch.nonzero(bad)[0]))


def discriminator_loss(disc: Discriminator, real, fake) -> torch.Tensor:
    """Binary cross-entropy of the discriminator, averaged over the real and fake sides.

    Args:
        disc: The feature discriminator.
        real: ``PairSet`` of records the discriminator should score as real (target 1).
        fake: ``PairSet`` of records it should score as fake (target 0).

    Returns:
        0.5 * (BCE on real + BCE on fake); a side with no records is left out,
        and two empty sides give 0.

    Raises:
        NumericalError: a feature vector is non-finite (index reported).
    """
    sides = []
    for name, pairs, target in (("real", real, 1.0), ("fake", fake, 0.0)):
        if pairs is None or len(pairs) == 0:
            continue
        _check_finite(name, pairs.features)
        scores = disc(pairs.features, pairs.class_onehot)
        sides.append(F.binary_cross_entropy_with_logits(scores, torch.full_like(scores, target)))
    if not sides:
        return torch.zeros((), device=next(disc.parameters()).device)
    return sum(sides) / len(sides)


def feature_alignment_loss(disc: Discriminator, synth_features: torch.Tensor, y_ps: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss -mean log sigmoid(D(features, onehot(y_ps))).

    Callers keep the discriminator's parameters frozen while this loss drives
    the generator.
    """
    onehot = F.one_hot(y_ps, disc.spec.num_classes).to(synth_features.dtype)
    scores = disc(synth_features, onehot)
    return F.binary_cross_entropy_with_logits(scores, torch.ones_like(scores))


def generator_loss(cfg, parts: Mapping[str, Optional[torch.Tensor]]) -> torch.Tensor:
    """Weighted sum of the inversion loss components.

    Args:
        cfg: ``InversionConfig`` providing the weights.
        parts: Mapping with any of ``conf``, ``adv``, ``bn``, ``fa``; missing or
            ``None`` components contribute nothing at all.
    """
    weights = {"conf": cfg.weights.conf, "adv": cfg.weights.adv, "bn": cfg.weights.bn, "fa": cfg.weights.fa}
    total = None
    for key in ("conf", "adv", "bn", "fa"):
        value = parts.get(key)
        if value is None:
            continue
        term = weights[key] * value
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total
