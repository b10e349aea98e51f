"""Model zoo.

Teacher/student classifiers, the inversion generator, the feature
discriminator, and access to penultimate features and batch-norm statistics.
"""

from src.cskd.models.classifiers import CLASSIFIERS, Classifier, ClassifierSpec, build_classifier
from src.cskd.models.generators import Generator, GeneratorSpec, build_generator, generator_spec_for
from src.cskd.models.discriminator import Discriminator, DiscriminatorSpec, build_discriminator, parameter_count
from src.cskd.models.introspection import BatchStatsHook, BNStatistics, bn_statistics, penultimate_features
from src.cskd.models.checkpoint import load_checkpoint, save_checkpoint
from src.cskd.models.context import TrainConfig
from src.cskd.models.training import train_classifier, train_teacher

__all__ = [
    "CLASSIFIERS",
    "Classifier",
    "ClassifierSpec",
    "build_classifier",
    "Generator",
    "GeneratorSpec",
    "build_generator",
    "generator_spec_for",
    "Discriminator",
    "DiscriminatorSpec",
    "build_discriminator",
    "parameter_count",
    "BatchStatsHook",
    "BNStatistics",
    "bn_statistics",
    "penultimate_features",
    "load_checkpoint",
    "save_checkpoint",
    "TrainConfig",
    "train_classifier",
    "train_teacher",
]
