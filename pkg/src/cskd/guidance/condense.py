"""Desk-scale dataset condensation by distribution matching.

Synthetic images start from a stratified random real subset and are optimised
so that, class by class, the mean penultimate feature of an augmented
synthetic batch matches that of an augmented real batch (the same augmentation
draw is used on both sides). The iterate with the lowest un-augmented
class-mean distance to the full real set is returned.
"""

from __future__ import annotations

import logging
from typing import Sequence

import torch
from tqdm.auto import tqdm

from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.guidance.fewshot import stratified_indices
from src.cskd.guidance.stats import ClassFeatureStats, class_feature_stats
from src.cskd.inversion.augment import diff_augment
from src.cskd.models.classifiers import Classifier
from src.cskd.utils import derive_seed, frozen, make_generator

logger = logging.getLogger(__name__)


def class_mean_distance(model: Classifier, condensed: LabeledImageSet, reference: ClassFeatureStats) -> float:
    """Mean over classes of the L2 distance between class-mean features."""
    stats = class_feature_stats(model, condensed)
    classes = [c for c in stats.present if c in reference.present]
    if not classes:
        return float("inf")
    gaps = (stats.means[classes] - reference.means[classes]).norm(dim=1)
    return float(gaps.mean())


def condense_dm(
    data: LabeledImageSet,
    spc: int,
    model: Classifier,
    steps: int,
    seed: int,
    *,
    lr_img: float = 1.0,
    batch_real: int = 256,
    eval_every: int = 50,
    policy: Sequence[str] = ("color", "translation", "cutout"),
) -> LabeledImageSet:
    """Condense ``data`` to ``spc`` records per class.

    Args:
        data: Real labeled set with at least ``spc`` records per class.
        spc: Records per class in the output.
        model: Feature extractor (a trained teacher or a random network); frozen.
        steps: Optimisation steps; 0 returns the initial real subset.
        seed: Seed of the initial subset, the real batches and augmentations.
        lr_img: Learning rate of the SGD over pixels.
        batch_real: Real records per class per step.
        eval_every: Steps between best-iterate evaluations.
        policy: Augmentation applied to both sides.

    Returns:
        A ``condensed`` set with exactly ``spc`` records per class, pixels in [0, 1].

    Raises:
        InsufficientDataError: a class holds fewer than ``spc`` records.
    """
    init_idx = stratified_indices(data, spc, derive_seed(seed, "init"))
    initial = data.subset(init_idx, spc=spc, source="condensed")
    if steps <= 0:
        return initial

    device = next(model.parameters()).device
    was_training = model.training
    model.eval()
    reference = class_feature_stats(model, data)
    best = initial
    best_distance = class_mean_distance(model, initial, reference)
    logger.info("condense_dm: initial class-mean distance %.5f", best_distance)

    members = data.class_indices()
    labels = initial.labels.to(device)
    synthetic = initial.images.clone().to(device).requires_grad_(True)
    optimizer = torch.optim.SGD([synthetic], lr=lr_img, momentum=0.5)
    gen = make_generator(derive_seed(seed, "real-batches"))

    with frozen(model):
        for step in tqdm(range(steps), desc="condense", leave=False):
            loss = torch.zeros((), device=device)
            for c, idx in enumerate(members):
                take = idx[torch.randperm(len(idx), generator=gen)[:batch_real]]
                real = data.images[take].to(device)
                syn = synthetic[labels == c]
                aug_seed = derive_seed(seed, "augment", step, c)
                real_mean = model.penultimate(diff_augment(real, policy, aug_seed)).mean(dim=0)
                syn_mean = model.penultimate(diff_augment(syn, policy, aug_seed)).mean(dim=0)
                loss = loss + (real_mean.detach() - syn_mean).pow(2).sum()
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                synthetic.clamp_(0.0, 1.0)

            if (step + 1) % eval_every == 0 or step + 1 == steps:
                candidate = LabeledImageSet(synthetic.detach().cpu().clone(), initial.labels.clone(), initial.meta)
                distance = class_mean_distance(model, candidate, reference)
                logger.debug("condense_dm step %d: loss %.5f distance %.5f", step + 1, loss.item(), distance)
                if distance < best_distance:
                    best, best_distance = candidate, distance

    model.train(was_training)
    logger.info("condense_dm: best class-mean distance %.5f after %d steps", best_distance, steps)
    return best
