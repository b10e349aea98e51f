"""Differentiable augmentation applied before the feature discriminator.

Colour jitter, translation and cutout, each built only from differentiable
tensor ops so gradients reach the generator. Randomness comes from an explicit
seed, so identical (batch, policy, seed) triples give identical outputs.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Sequence

import torch
import torch.nn.functional as F

from src.cskd.errors import ConfigurationError
from src.cskd.utils import make_generator

AugmentFn = Callable[[torch.Tensor, torch.Generator], torch.Tensor]


def _uniform(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    return torch.rand(x.size(0), 1, 1, 1, generator=gen, device=gen.device).to(x)


def rand_brightness(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    return x + (_uniform(x, gen) - 0.5)


def rand_saturation(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    x_mean = x.mean(dim=1, keepdim=True)
    return (x - x_mean) * (_uniform(x, gen) * 2) + x_mean


def rand_contrast(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    x_mean = x.mean(dim=[1, 2, 3], keepdim=True)
    return (x - x_mean) * (_uniform(x, gen) + 0.5) + x_mean


def _randint(low: int, high: int, n: int, gen: torch.Generator, device: torch.device) -> torch.Tensor:
    return torch.randint(low, high, size=[n, 1, 1], generator=gen, device=gen.device).to(device)


def rand_translation(x: torch.Tensor, gen: torch.Generator, ratio: float = 0.125) -> torch.Tensor:
    shift_x, shift_y = int(x.size(2) * ratio), int(x.size(3) * ratio)
    translation_x = _randint(-shift_x, shift_x + 1, x.size(0), gen, x.device)
    translation_y = _randint(-shift_y, shift_y + 1, x.size(0), gen, x.device)
    grid_batch, grid_x, grid_y = torch.meshgrid(
        torch.arange(x.size(0), dtype=torch.long, device=x.device),
        torch.arange(x.size(2), dtype=torch.long, device=x.device),
        torch.arange(x.size(3), dtype=torch.long, device=x.device),
        indexing="ij",
    )
    grid_x = torch.clamp(grid_x + translation_x + 1, 0, x.size(2) + 1)
    grid_y = torch.clamp(grid_y + translation_y + 1, 0, x.size(3) + 1)
    x_pad = F.pad(x, [1, 1, 1, 1, 0, 0, 0, 0])
    return x_pad.permute(0, 2, 3, 1).contiguous()[grid_batch, grid_x, grid_y].permute(0, 3, 1, 2)


def rand_cutout(x: torch.Tensor, gen: torch.Generator, ratio: float = 0.5) -> torch.Tensor:
    cutout_size = int(x.size(2) * ratio), int(x.size(3) * ratio)
    offset_x = _randint(0, x.size(2) + (1 - cutout_size[0] % 2), x.size(0), gen, x.device)
    offset_y = _randint(0, x.size(3) + (1 - cutout_size[1] % 2), x.size(0), gen, x.device)
    grid_batch, grid_x, grid_y = torch.meshgrid(
        torch.arange(x.size(0), dtype=torch.long, device=x.device),
        torch.arange(cutout_size[0], dtype=torch.long, device=x.device),
        torch.arange(cutout_size[1], dtype=torch.long, device=x.device),
        indexing="ij",
    )
    grid_x = torch.clamp(grid_x + offset_x - cutout_size[0] // 2, min=0, max=x.size(2) - 1)
    grid_y = torch.clamp(grid_y + offset_y - cutout_size[1] // 2, min=0, max=x.size(3) - 1)
    mask = torch.ones(x.size(0), x.size(2), x.size(3), dtype=x.dtype, device=x.device)
    mask[grid_batch, grid_x, grid_y] = 0
    return x * mask.unsqueeze(1)


# Register all augmentations
AUGMENTATIONS: Dict[str, List[AugmentFn]] = {
    "color": [rand_brightness, rand_saturation, rand_contrast],
    "translation": [rand_translation],
    "cutout": [rand_cutout],
}


def diff_augment(batch: torch.Tensor, policy: Sequence[str], seed: int) -> torch.Tensor:
    """Apply the augmentations named in ``policy`` in order.

    Args:
        batch: Images of shape (B, C, H, W).
        policy: Ordered subset of ``color``, ``translation``, ``cutout``.
        seed: Seed of the augmentation draw.

    Returns:
        The augmented batch (``batch`` itself when ``policy`` is empty).

    Raises:
        ConfigurationError: ``policy`` names an unknown augmentation.
    """
    unknown = [p for p in policy if p not in AUGMENTATIONS]
    if unknown:
        raise ConfigurationError(f"unknown augmentation(s) {unknown}; valid: {', '.join(AUGMENTATIONS)}")
    if not policy:
        return batch
    gen = make_generator(seed)
    x = batch
    for name in policy:
        for fn in AUGMENTATIONS[name]:
            x = fn(x, gen)
    return x.contiguous()
