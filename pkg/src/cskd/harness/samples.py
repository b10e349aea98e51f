"""Per-class image grids of stored sets, for eyeballing synthetic and condensed samples."""

from __future__ import annotations

import logging
from pathlib import Path

import torch
from torchvision.utils import make_grid, save_image

from src.cskd.errors import ConfigurationError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.utils import PathLike, derive_seed, make_generator

logger = logging.getLogger(__name__)


def class_grid(data: LabeledImageSet, per_class: int = 8, seed: int = 0, padding: int = 2) -> torch.Tensor:
    """Arrange ``data`` as one row per class.

    Classes with more than ``per_class`` records are subsampled (seeded); short
    rows are filled with black tiles, so an absent class is an empty row.

    Returns:
        A (3, H, W) grid in [0, 1] with white padding.
    """
    if per_class < 1:
        raise ConfigurationError(f"per_class must be >= 1, got {per_class}")
    if len(data) == 0:
        raise ConfigurationError("cannot render an empty set")
    gen = make_generator(derive_seed(seed, "grid"))
    images = data.images.detach().cpu()
    tiles = torch.zeros(data.num_classes * per_class, *data.shape)
    for c, idx in enumerate(data.class_indices()):
        if len(idx) > per_class:
            idx = torch.sort(idx[torch.randperm(len(idx), generator=gen)[:per_class]])[0]
        tiles[c * per_class : c * per_class + len(idx)] = images[idx]
    return make_grid(tiles, nrow=per_class, padding=padding, pad_value=1.0)


def save_class_grid(
    data: LabeledImageSet,
    directory: PathLike,
    stem: str = "samples",
    per_class: int = 8,
    seed: int = 0,
) -> Path:
    """Write the class grid of ``data`` to ``<directory>/<stem>.png``."""
    grid = class_grid(data, per_class=per_class, seed=seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{stem}.png"
    save_image(grid, path)
    logger.info("saved %d-class grid of %s records to %s", data.num_classes, len(data), path)
    return path
