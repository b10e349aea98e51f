"""Define the configurable parameters for supervised classifier training."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

from src.cskd.errors import ConfigurationError


@dataclass(kw_only=True)
class TrainConfig:
    """Hyperparameters for training a teacher (or any classifier) on labeled data."""

    epochs: int = field(default=10, metadata={"description": "Passes over the training set; 0 returns the initialised model."})
    lr: float = field(default=1e-3, metadata={"description": "Initial learning rate."})
    batch_size: int = field(default=128, metadata={"description": "Mini-batch size."})
    optimizer: Literal["adam", "sgd"] = field(default="adam", metadata={"description": "adam or sgd (momentum 0.9)."})
    weight_decay: float = field(default=0.0, metadata={"description": "L2 penalty."})
    cosine: bool = field(default=True, metadata={"description": "Cosine-anneal the learning rate over the run."})
    val_fraction: float = field(
        default=0.1,
        metadata={"description": "Held-out share of the training data used when no evaluation set is given."},
    )
    num_workers: int = field(default=0, metadata={"description": "DataLoader worker processes."})
    seed: int = field(default=0, metadata={"description": "Seed for initialisation and batch order."})

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
