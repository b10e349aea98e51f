"""Real and fake record sets for the conditional feature discriminator.

Real records pair guidance features with their labels. Fake records pair
synthetic features with their (pseudo) labels, plus guidance features with a
wrong class so the discriminator cannot ignore the class input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import torch
import torch.nn.functional as F

from src.cskd.errors import ConfigurationError, DimensionError
from src.cskd.utils import make_generator


@dataclass(frozen=True)
class DiscriminatorPair:
    feature: torch.Tensor
    class_onehot: torch.Tensor
    target: int


@dataclass
class PairSet:
    """Stacked discriminator records: features (N, d), one-hot (N, nc), targets (N,)."""

    features: torch.Tensor
    class_onehot: torch.Tensor
    targets: torch.Tensor

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    def __iter__(self) -> Iterator[DiscriminatorPair]:
        for f, c, t in zip(self.features, self.class_onehot, self.targets.tolist()):
            yield DiscriminatorPair(f, c, int(t))

    @property
    def labels(self) -> torch.Tensor:
        return self.class_onehot.argmax(dim=1)

    @staticmethod
    def from_labels(features: torch.Tensor, labels: torch.Tensor, nc: int, target: int) -> "PairSet":
        onehot = F.one_hot(labels.long(), nc).to(features.dtype)
        targets = torch.full((features.shape[0],), float(target), dtype=features.dtype, device=features.device)
        return PairSet(features, onehot, targets)

    @staticmethod
    def concat(*sets: "PairSet") -> "PairSet":
        return PairSet(
            torch.cat([s.features for s in sets]),
            torch.cat([s.class_onehot for s in sets]),
            torch.cat([s.targets for s in sets]),
        )


def wrong_labels(labels: torch.Tensor, nc: int, seed: int) -> torch.Tensor:
    """Draw one class per record uniformly from the classes other than its own."""
    offsets = torch.randint(1, nc, labels.shape, generator=make_generator(seed)).to(labels.device)
    return (labels + offsets) % nc


def build_real_fake_sets(
    cond_features: torch.Tensor,
    cond_labels: torch.Tensor,
    synth_features: torch.Tensor,
    y_ps: torch.Tensor,
    nc: int,
    seed: int,
    *,
    conditional: bool = True,
    full_enumeration: bool = False,
) -> tuple[PairSet, PairSet]:
    """Build the real set R and fake set F fed to the discriminator.

    Args:
        cond_features: (n_cond, d) guidance features.
        cond_labels: (n_cond,) guidance labels.
        synth_features: (n_synth, d) synthetic features.
        y_ps: (n_synth,) labels paired with the synthetic features.
        nc: Number of classes.
        seed: Seed of the wrong-label draw.
        conditional: When false no wrong-label pairs are added (generic alignment).
        full_enumeration: Pair every guidance feature with every wrong class
            instead of one sampled wrong class.

    Returns:
        ``(real, fake)``; |real| = n_cond and |fake| = n_synth + n_cond in the
        default mode.

    Raises:
        ConfigurationError: ``nc < 2``.
        DimensionError: feature widths or label counts disagree.
    """
    if nc < 2:
        raise ConfigurationError(f"need at least 2 classes to build wrong-label pairs, got nc={nc}")
    if cond_features.shape[-1] != synth_features.shape[-1]:
        raise DimensionError(
            f"guidance features are {cond_features.shape[-1]} wide, synthetic features {synth_features.shape[-1]}"
        )
    if cond_features.shape[0] != cond_labels.shape[0] or synth_features.shape[0] != y_ps.shape[0]:
        raise DimensionError("every feature row needs exactly one label")
    for name, labels in (("guidance", cond_labels), ("synthetic", y_ps)):
        if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= nc):
            raise ConfigurationError(f"{name} labels must lie in [0, {nc})")

    real = PairSet.from_labels(cond_features, cond_labels, nc, 1)
    fakes = [PairSet.from_labels(synth_features, y_ps, nc, 0)]
    if conditional and cond_features.shape[0] > 0:
        if full_enumeration:
            offsets = torch.arange(1, nc, device=cond_labels.device)
            wrong = (cond_labels.unsqueeze(1) + offsets.unsqueeze(0)) % nc
            feats = cond_features.repeat_interleave(nc - 1, dim=0)
            fakes.append(PairSet.from_labels(feats, wrong.reshape(-1), nc, 0))
        else:
            fakes.append(PairSet.from_labels(cond_features, wrong_labels(cond_labels, nc, seed), nc, 0))
    return real, PairSet.concat(*fakes)


if __name__ == "__main__":
    feats = torch.randn(4, 2)
    real, fake = build_real_fake_sets(feats, torch.tensor([0, 1, 2, 0]), feats[:2], torch.tensor([1, 1]), 3, seed=0)
    print(f"real: {len(real)} pairs, fake: {len(fake)} pairs")
    print("fake labels:", fake.class_onehot.argmax(dim=1).tolist())
