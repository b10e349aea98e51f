"""Define the configurable parameters for student distillation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

from src.cskd.errors import ConfigurationError


@dataclass(kw_only=True)
class KDConfig:
    """Student optimisation settings and pool behaviour."""

    epochs: int = field(default=40, metadata={"description": "Distillation epochs."})
    student_lr: float = field(default=0.05, metadata={"description": "Initial SGD learning rate, cosine-annealed."})
    momentum: float = field(default=0.9, metadata={"description": "SGD momentum."})
    weight_decay: float = field(default=5e-4, metadata={"description": "SGD weight decay."})
    batch_size: int = field(default=256, metadata={"description": "Records sampled from the pool per student update."})
    temperature: float = field(default=1.0, metadata={"description": "Softmax temperature of the KD loss."})
    include_guidance_in_pool: bool = field(
        default=True,
        metadata={"description": "Seed the pool with the guidance set; false keeps it for inversion only."},
    )
    student_steps_per_epoch: int = field(
        default=50,
        metadata={"description": "Inversion + student update rounds per epoch (1 is the literal single-update loop)."},
    )
    kl_direction: Literal["student_first", "teacher_first"] = field(
        default="student_first", metadata={"description": "Argument order of the KL divergence."}
    )
    pool_capacity: Optional[int] = field(
        default=None, metadata={"description": "Maximum pool size; oldest synthetic entries are evicted first."}
    )
    seed: Optional[int] = field(default=None, metadata={"description": "Overrides the run seed for distillation."})

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ConfigurationError(f"kd.temperature must be > 0, got {self.temperature}")
        if self.batch_size < 1:
            raise ConfigurationError(f"kd.batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigurationError(f"kd.epochs must be >= 0, got {self.epochs}")
        if self.student_steps_per_epoch < 1:
            raise ConfigurationError(f"kd.student_steps_per_epoch must be >= 1, got {self.student_steps_per_epoch}")
        if self.kl_direction not in ("student_first", "teacher_first"):
            raise ConfigurationError(f"kd.kl_direction must be student_first or teacher_first, got {self.kl_direction!r}")
        if self.pool_capacity is not None and self.pool_capacity < 1:
            raise ConfigurationError(f"kd.pool_capacity must be >= 1, got {self.pool_capacity}")
