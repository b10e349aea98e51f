"""Labeled image sets and the built-in dataset readers.

A ``LabeledImageSet`` is the single container for real data, condensed sets,
few-shot subsets and synthetic snapshots. Images always live in [0, 1];
normalisation statistics travel in ``meta`` and are applied by the classifier.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import torch

from src.cskd.errors import ArtifactMissingError, CondensedFormatError, DimensionError, RegistryError
from src.cskd.utils import PathLike, make_generator, sha256_bytes

logger = logging.getLogger(__name__)

Source = Literal["real", "condensed", "fewshot", "synthetic"]
SOURCES: Tuple[str, ...] = ("real", "condensed", "fewshot", "synthetic")


@dataclass(kw_only=True)
class SetMeta:
    dataset_name: str = field(metadata={"description": "Name of the originating dataset."})
    num_classes: int = field(metadata={"description": "Number of classes nc of the label space."})
    spc: Optional[int] = field(default=None, metadata={"description": "Exact samples per class, if stratified."})
    mean: Tuple[float, ...] = field(default=(0.0,), metadata={"description": "Per-channel normalisation mean."})
    std: Tuple[float, ...] = field(default=(1.0,), metadata={"description": "Per-channel normalisation std."})
    source: Source = field(default="real", metadata={"description": "real, condensed, fewshot or synthetic."})


@dataclass
class LabeledImageSet:
    images: torch.Tensor
    labels: torch.Tensor
    meta: SetMeta

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Check the container invariants.

        Raises:
            DimensionError: shapes disagree.
            CondensedFormatError: labels, spc or pixel range violate the invariants.
        """
        if self.images.dim() != 4:
            raise DimensionError(f"images must be (N, C, H, W), got {tuple(self.images.shape)}")
        if self.labels.dim() != 1 or self.labels.shape[0] != self.images.shape[0]:
            raise DimensionError(f"{self.images.shape[0]} images but labels of shape {tuple(self.labels.shape)}")
        if self.meta.source not in SOURCES:
            raise CondensedFormatError(f"unknown source {self.meta.source!r}; valid: {', '.join(SOURCES)}")
        nc = self.meta.num_classes
        if len(self) and (int(self.labels.min()) < 0 or int(self.labels.max()) >= nc):
            bad = self.labels[(self.labels < 0) | (self.labels >= nc)][0].item()
            raise CondensedFormatError(f"label {bad} out of range [0, {nc})")
        if len(self) and (float(self.images.min()) < 0.0 or float(self.images.max()) > 1.0):
            raise CondensedFormatError("image values must lie in [0, 1]")
        if self.meta.spc is not None:
            counts = self.class_counts()
            wrong = {c: int(n) for c, n in enumerate(counts.tolist()) if n != self.meta.spc}
            if wrong:
                listing = ", ".join(f"class {c} has {n}" for c, n in sorted(wrong.items()))
                raise CondensedFormatError(f"spc invariant violated: expected {self.meta.spc} per class; {listing}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_classes(self) -> int:
        return self.meta.num_classes

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_counts(self) -> torch.Tensor:
        return torch.bincount(self.labels.cpu(), minlength=self.meta.num_classes)

    def class_indices(self) -> List[torch.Tensor]:
        labels = self.labels.cpu()
        return [torch.nonzero(labels == c, as_tuple=True)[0] for c in range(self.meta.num_classes)]

    def subset(self, indices: torch.Tensor, **meta_changes) -> "LabeledImageSet":
        indices = torch.as_tensor(indices, dtype=torch.long)
        meta_changes.setdefault("spc", None)
        meta = dataclasses.replace(self.meta, **meta_changes)
        return LabeledImageSet(self.images[indices.to(self.images.device)], self.labels[indices.to(self.labels.device)], meta)

    def to(self, device: str | torch.device) -> "LabeledImageSet":
        return LabeledImageSet(self.images.to(device), self.labels.to(device), self.meta)

    def fingerprint(self) -> str:
        """SHA-256 over the little-endian image and label bytes."""
        images = self.images.detach().cpu().numpy().astype("<f4", copy=False).tobytes()
        labels = self.labels.detach().cpu().numpy().astype("<i8", copy=False).tobytes()
        return sha256_bytes(images + labels)


@dataclass(frozen=True)
class DatasetEntry:
    loader: Callable[..., object]
    num_classes: int
    shape: Tuple[int, int, int]
    mean: Tuple[float, ...]
    std: Tuple[float, ...]


def _torchvision(name: str) -> Callable[..., object]:
    def load(root: str, train: bool, download: bool):
        import torchvision

        return getattr(torchvision.datasets, name)(root=root, train=train, download=download)

    return load


# Register all datasets
DATASETS: Dict[str, DatasetEntry] = {
    "mnist": DatasetEntry(_torchvision("MNIST"), 10, (1, 28, 28), (0.1307,), (0.3081,)),
    "fashionmnist": DatasetEntry(_torchvision("FashionMNIST"), 10, (1, 28, 28), (0.2860,), (0.3530,)),
    "cifar10": DatasetEntry(
        _torchvision("CIFAR10"), 10, (3, 32, 32), (0.4914, 0.4822, 0.4465), (0.2470, 0.2435, 0.2616)
    ),
}


def _dataset_entry(name: str) -> DatasetEntry:
    entry = DATASETS.get(name.lower())
    if entry is None:
        raise RegistryError("dataset", name, DATASETS)
    return entry


def _to_tensors(ds: object) -> Tuple[torch.Tensor, torch.Tensor]:
    data = ds.data
    if isinstance(data, np.ndarray):
        images = torch.from_numpy(data).permute(0, 3, 1, 2)
    else:
        images = data.unsqueeze(1) if data.dim() == 3 else data
    labels = torch.as_tensor(np.asarray(ds.targets), dtype=torch.long)
    return images.float().div_(255.0).contiguous(), labels


def load_dataset(
    name: str,
    root: PathLike,
    train: bool = True,
    subset_size: Optional[int] = None,
    seed: int = 0,
) -> LabeledImageSet:
    """Read a built-in dataset from standard archive files already on disk.

    Args:
        name: mnist, fashionmnist or cifar10.
        root: Directory holding the torchvision archive layout.
        train: Training or test split.
        subset_size: Keep a seeded random subset of this many records.
        seed: Seed for the subset draw.

    Raises:
        ArtifactMissingError: the archives are not under ``root``.
    """
    entry = _dataset_entry(name)
    try:
        ds = entry.loader(str(root), train, False)
    except RuntimeError as e:
        raise ArtifactMissingError(f"{name} archives not found under {root}: {e}. Run `fetch` first.") from e
    images, labels = _to_tensors(ds)
    if subset_size is not None and subset_size < len(labels):
        order = torch.randperm(len(labels), generator=make_generator(seed))[:subset_size]
        order, _ = torch.sort(order)
        images, labels = images[order], labels[order]
    meta = SetMeta(dataset_name=name.lower(), num_classes=entry.num_classes, mean=entry.mean, std=entry.std)
    logger.info("loaded %s/%s: %d records", name, "train" if train else "test", len(labels))
    return LabeledImageSet(images, labels, meta)


def fetch_dataset(name: str, root: PathLike) -> None:
    """Download both splits of ``name`` into ``root`` (the only networked path)."""
    entry = _dataset_entry(name)
    for train in (True, False):
        entry.loader(str(root), train, True)
    logger.info("fetched %s into %s", name, root)

