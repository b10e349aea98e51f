"""Define the configurable parameters for model inversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal, Tuple

from src.cskd.errors import ConfigurationError

DIFFAUG_OPS = ("color", "translation", "cutout")


@dataclass(kw_only=True)
class LossWeights:
    conf: float = field(default=1.0, metadata={"description": "Weight of the teacher-confidence term."})
    adv: float = field(default=1.0, metadata={"description": "Weight of the teacher-student divergence term."})
    bn: float = field(default=1.0, metadata={"description": "Weight of the batch-norm statistics term."})
    fa: float = field(default=0.5, metadata={"description": "Weight of the feature-alignment term."})


@dataclass(kw_only=True)
class DiscOptim:
    lr: float = field(default=0.002, metadata={"description": "Adam learning rate of the discriminator."})
    beta1: float = field(default=0.5, metadata={"description": "Adam beta1 of the discriminator."})
    beta2: float = field(default=0.999, metadata={"description": "Adam beta2 of the discriminator."})


@dataclass(kw_only=True)
class InversionConfig:
    """Base backend, loss weights, update ratio, reset policy and discriminator optimiser."""

    backend: str = field(default="deepinv", metadata={"description": "plain_ce or deepinv (cmi, pre_dfkd are stubs)."})
    weights: LossWeights = field(default_factory=LossWeights)
    conditional: bool = field(
        default=True, metadata={"description": "Class-specific (true) or generic (false) feature alignment."}
    )
    gen_updates: int = field(default=2, metadata={"description": "Generator updates per student update (Fast-N)."})
    reset_period: int = field(
        default=50, metadata={"description": "Re-initialise generator and discriminator every N epochs."}
    )
    diffaug: List[str] = field(
        default_factory=lambda: ["color", "translation", "cutout"],
        metadata={"description": "Ordered differentiable augmentation policy."},
    )
    disc: DiscOptim = field(default_factory=DiscOptim)
    generator: Literal["fast", "pre_dfkd"] = field(
        default="fast", metadata={"description": "fast (sigmoid, nz=256) or pre_dfkd (spectral norm, tanh)."}
    )
    nz: int = field(default=256, metadata={"description": "Generator latent dimension."})
    gen_lr: float = field(default=1e-3, metadata={"description": "Adam learning rate of the generator."})
    gen_betas: Tuple[float, float] = field(default=(0.5, 0.999), metadata={"description": "Adam betas of the generator."})
    batch_size: int = field(default=256, metadata={"description": "Synthetic images generated per step."})
    guidance_batch_size: int = field(
        default=256, metadata={"description": "Guidance records fed to the discriminator per update."}
    )
    fake_labels: Literal["pseudo", "teacher"] = field(
        default="pseudo",
        metadata={"description": "Class paired with synthetic features: pseudo-labels or teacher argmax."},
    )
    disc_first: bool = field(
        default=False, metadata={"description": "Update the discriminator before the generator updates."}
    )

    def __post_init__(self) -> None:
        for name in ("conf", "adv", "bn", "fa"):
            if getattr(self.weights, name) < 0:
                raise ConfigurationError(f"inversion.weights.{name} must be >= 0")
        if self.gen_updates < 1:
            raise ConfigurationError(f"inversion.gen_updates must be >= 1, got {self.gen_updates}")
        if self.reset_period < 1:
            raise ConfigurationError(f"inversion.reset_period must be >= 1, got {self.reset_period}")
        unknown = [op for op in self.diffaug if op not in DIFFAUG_OPS]
        if unknown:
            raise ConfigurationError(f"unknown diffaug entries {unknown}; valid: {', '.join(DIFFAUG_OPS)}")
        if self.fake_labels not in ("pseudo", "teacher"):
            raise ConfigurationError(f"inversion.fake_labels must be pseudo or teacher, got {self.fake_labels!r}")
        if self.generator not in ("fast", "pre_dfkd"):
            raise ConfigurationError(f"inversion.generator must be fast or pre_dfkd, got {self.generator!r}")
        if self.batch_size < 1 or self.guidance_batch_size < 1 or self.nz < 1:
            raise ConfigurationError("inversion batch sizes and nz must be >= 1")

    @property
    def w_fa(self) -> float:
        return self.weights.fa

    @property
    def gen_updates_per_student_update(self) -> int:
        return self.gen_updates

    @property
    def reset_period_epochs(self) -> int:
        return self.reset_period

    @property
    def disc_betas(self) -> Tuple[float, float]:
        return (self.disc.beta1, self.disc.beta2)
