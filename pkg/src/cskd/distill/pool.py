"""The growing sample pool the student is distilled from.

Guidance records and generated batches share one pool and are sampled
uniformly with replacement, regardless of where they came from.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Union

import torch

from src.cskd.errors import ConfigurationError, EmptyPoolError
from src.cskd.guidance.dataset import SOURCES, LabeledImageSet
from src.cskd.inversion.step import SyntheticBatch
from src.cskd.utils import make_generator

logger = logging.getLogger(__name__)

_SYNTHETIC = SOURCES.index("synthetic")


@dataclass(frozen=True)
class PoolEntry:
    image: torch.Tensor
    label: int
    source: str


@dataclass
class PoolBatch:
    images: torch.Tensor
    labels: torch.Tensor
    sources: torch.Tensor

    def source_fraction(self, source: str) -> float:
        return float((self.sources == SOURCES.index(source)).float().mean())


class SyntheticPool:
    """Append-only store of (image, label, source) records.

    Records live in buffers that grow geometrically, so appending a batch does
    not copy the whole pool.

    Args:
        capacity: Maximum number of records, or ``None`` for unbounded. When
            exceeded, the oldest synthetic records are evicted first; guidance
            records are never evicted.
        device: Where the records are kept.
    """

    def __init__(self, capacity: Optional[int] = None, device: str | torch.device = "cpu") -> None:
        if capacity is not None and capacity < 1:
            raise ConfigurationError(f"pool capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.device = torch.device(device)
        self._images: Optional[torch.Tensor] = None
        self._labels = torch.empty(0, dtype=torch.long, device=self.device)
        self._sources = torch.empty(0, dtype=torch.int8, device=self.device)
        self._size = 0
        self.evicted = 0

    def __len__(self) -> int:
        return self._size

    @property
    def images(self) -> torch.Tensor:
        if self._images is None:
            raise EmptyPoolError("pool holds no images yet")
        return self._images[: self._size]

    @property
    def labels(self) -> torch.Tensor:
        return self._labels[: self._size]

    @property
    def sources(self) -> torch.Tensor:
        return self._sources[: self._size]

    def __iter__(self) -> Iterator[PoolEntry]:
        for i in range(len(self)):
            yield PoolEntry(self.images[i], int(self.labels[i]), SOURCES[int(self.sources[i])])

    def source_counts(self) -> Dict[str, int]:
        counts = torch.bincount(self.sources.long().cpu(), minlength=len(SOURCES)).tolist()
        return {name: n for name, n in zip(SOURCES, counts) if n}

    def _reserve(self, extra: int, record_shape: torch.Size) -> None:
        needed = self._size + extra
        if self._images is None:
            length = max(needed, 1024)
            self._images = torch.empty((length, *record_shape), device=self.device)
            self._labels = torch.empty(length, dtype=torch.long, device=self.device)
            self._sources = torch.empty(length, dtype=torch.int8, device=self.device)
            return
        if tuple(record_shape) != tuple(self._images.shape[1:]):
            raise ConfigurationError(f"pool holds {tuple(self._images.shape[1:])} images, got {tuple(record_shape)}")
        if needed <= self._images.shape[0]:
            return
        length = max(needed, 2 * self._images.shape[0])
        grown = torch.empty((length, *record_shape), device=self.device)
        grown[: self._size] = self.images
        labels = torch.empty(length, dtype=torch.long, device=self.device)
        labels[: self._size] = self.labels
        sources = torch.empty(length, dtype=torch.int8, device=self.device)
        sources[: self._size] = self.sources
        self._images, self._labels, self._sources = grown, labels, sources

    def add(self, batch: Union[SyntheticBatch, LabeledImageSet]) -> "SyntheticPool":
        """Append a generated batch (source ``synthetic``) or a labeled set (its own source)."""
        if isinstance(batch, SyntheticBatch):
            images, labels, source = batch.images, batch.pseudo_labels, "synthetic"
        else:
            images, labels, source = batch.images, batch.labels, batch.meta.source
        n = len(labels)
        if n == 0:
            raise ConfigurationError("cannot add an empty batch to the pool")
        self._reserve(n, images.shape[1:])
        end = self._size + n
        self._images[self._size : end] = images.detach().to(self.device)
        self._labels[self._size : end] = labels.detach().to(self.device).long()
        self._sources[self._size : end] = SOURCES.index(source)
        self._size = end
        self._evict()
        return self

    def _evict(self) -> None:
        if self.capacity is None or len(self) <= self.capacity:
            return
        excess = len(self) - self.capacity
        drop = torch.nonzero(self.sources == _SYNTHETIC, as_tuple=True)[0][:excess]
        if len(drop) < excess:
            logger.warning("pool over capacity by %d guidance records that cannot be evicted", excess - len(drop))
        keep = torch.ones(len(self), dtype=torch.bool, device=self.device)
        keep[drop] = False
        kept = int(keep.sum())
        self._images[:kept] = self.images[keep]
        self._labels[:kept] = self.labels[keep]
        self._sources[:kept] = self.sources[keep]
        self._size = kept
        self.evicted += len(drop)

    def sample(self, batch_size: int, seed: int) -> PoolBatch:
        """Draw ``batch_size`` records uniformly with replacement.

        Raises:
            EmptyPoolError: the pool has no records.
        """
        if len(self) == 0:
            raise EmptyPoolError("cannot sample from an empty pool")
        index = torch.randint(0, len(self), (batch_size,), generator=make_generator(seed)).to(self.device)
        return PoolBatch(self.images[index], self.labels[index], self.sources[index])
