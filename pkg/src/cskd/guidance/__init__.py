"""Guidance samples.

Labeled image sets and dataset readers, the condensed-set file format, a
distribution-matching condenser, few-shot real subsets and per-class feature
statistics.
"""

from src.cskd.guidance.dataset import (
    DATASETS,
    SOURCES,
    LabeledImageSet,
    SetMeta,
    fetch_dataset,
    load_dataset,
)
from src.cskd.guidance.storage import load_condensed, save_condensed
from src.cskd.guidance.fewshot import sample_few_shot
from src.cskd.guidance.stats import ClassFeatureStats, class_feature_stats
from src.cskd.guidance.condense import class_mean_distance, condense_dm

__all__ = [
    "DATASETS",
    "SOURCES",
    "LabeledImageSet",
    "SetMeta",
    "fetch_dataset",
    "load_dataset",
    "load_condensed",
    "save_condensed",
    "sample_few_shot",
    "ClassFeatureStats",
    "class_feature_stats",
    "class_mean_distance",
    "condense_dm",
]
