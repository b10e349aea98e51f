"""Model inversion.

Data-free loss terms, the conditional feature-alignment objective, the
real/fake record construction for the discriminator, differentiable
augmentation, and the generator/discriminator minimax step.
"""

from src.cskd.inversion.context import DIFFAUG_OPS, DiscOptim, InversionConfig, LossWeights
from src.cskd.inversion.augment import AUGMENTATIONS, diff_augment
from src.cskd.inversion.losses import (
    adversarial_divergence_loss,
    bn_alignment_loss,
    confidence_loss,
    discriminator_loss,
    feature_alignment_loss,
    generator_loss,
)
from src.cskd.inversion.pairs import DiscriminatorPair, PairSet, build_real_fake_sets
from src.cskd.inversion.backends import BACKENDS, InversionBackend, build_backend
from src.cskd.inversion.step import ModelInverter, SyntheticBatch

__all__ = [
    "DIFFAUG_OPS",
    "DiscOptim",
    "InversionConfig",
    "LossWeights",
    "AUGMENTATIONS",
    "diff_augment",
    "adversarial_divergence_loss",
    "bn_alignment_loss",
    "confidence_loss",
    "discriminator_loss",
    "feature_alignment_loss",
    "generator_loss",
    "DiscriminatorPair",
    "PairSet",
    "build_real_fake_sets",
    "BACKENDS",
    "InversionBackend",
    "build_backend",
    "ModelInverter",
    "SyntheticBatch",
]
