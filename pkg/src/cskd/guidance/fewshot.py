"""Few-shot real guidance: stratified subsets of a labeled set."""

from __future__ import annotations

import logging

import torch

from src.cskd.errors import ConfigurationError, InsufficientDataError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.utils import derive_seed, make_generator

logger = logging.getLogger(__name__)


def check_class_population(data: LabeledImageSet, spc: int) -> None:
    """Raise ``InsufficientDataError`` listing every class with fewer than ``spc`` records."""
    if spc < 1:
        raise ConfigurationError(f"spc must be >= 1, got {spc}")
    counts = data.class_counts().tolist()
    deficient = {c: n for c, n in enumerate(counts) if n < spc}
    if deficient:
        raise InsufficientDataError(f"need {spc} records per class", deficient)


def stratified_indices(data: LabeledImageSet, spc: int, seed: int) -> torch.Tensor:
    """Draw ``spc`` indices per class without replacement, returned in ascending order."""
    check_class_population(data, spc)
    picked = []
    for c, members in enumerate(data.class_indices()):
        order = torch.randperm(len(members), generator=make_generator(derive_seed(seed, "class", c)))
        picked.append(members[order[:spc]])
    return torch.sort(torch.cat(picked))[0]


def sample_few_shot(data: LabeledImageSet, spc: int, seed: int) -> LabeledImageSet:
    """Class-stratified uniform sample of ``spc`` real records per class.

    Args:
        data: The real labeled set to draw from.
        spc: Records per class.
        seed: Seed of the draw; each class uses its own derived stream.

    Returns:
        A set tagged ``fewshot`` with ``spc`` set, in original record order.

    Raises:
        InsufficientDataError: some class holds fewer than ``spc`` records.
    """
    indices = stratified_indices(data, spc, seed)
    subset = data.subset(indices, spc=spc, source="fewshot")
    logger.info("sampled %d few-shot records (%d per class)", len(subset), spc)
    return subset
