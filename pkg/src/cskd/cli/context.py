"""Define the run configuration tree binding every module into one experiment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional

from src.cskd.context import env_fallback
from src.cskd.distill.context import KDConfig
from src.cskd.errors import ConfigurationError
from src.cskd.inversion.context import InversionConfig
from src.cskd.models.context import TrainConfig

logger = logging.getLogger(__name__)

MODES = ("datafree", "plus_cs", "star")
GUIDANCE_MODES = ("none", "condensed", "fewshot")


@dataclass(kw_only=True)
class DatasetContext:
    name: str = field(default="mnist", metadata={"description": "mnist, fashionmnist or cifar10."})
    root: str = field(default="data", metadata={"description": "Directory of the archive files.", "env": "CSKD_DATA_ROOT"})
    subset_size: Optional[int] = field(
        default=None, metadata={"description": "Seeded random subset of the training split."}
    )
    test_subset_size: Optional[int] = field(
        default=None, metadata={"description": "Seeded random subset of the test split used for evaluation."}
    )

    def __post_init__(self) -> None:
        env_fallback(self)


@dataclass(kw_only=True)
class TeacherContext:
    arch: str = field(default="lenet5", metadata={"description": "Teacher architecture id."})
    checkpoint: Optional[str] = field(default=None, metadata={"description": "Teacher checkpoint directory."})
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(kw_only=True)
class StudentContext:
    arch: str = field(default="lenet5_half", metadata={"description": "Student architecture id."})


@dataclass(kw_only=True)
class GuidanceContext:
    mode: Literal["none", "condensed", "fewshot"] = field(
        default="none", metadata={"description": "none, condensed (load path) or fewshot (sample spc real records)."}
    )
    path: Optional[str] = field(default=None, metadata={"description": "Condensed-set directory."})
    spc: Optional[int] = field(default=None, metadata={"description": "Samples per class to draw or condense."})
    method: Literal["dm", "fewshot"] = field(default="dm", metadata={"description": "Condensation method."})
    steps: int = field(default=1000, metadata={"description": "Distribution-matching steps."})
    lr_img: float = field(default=1.0, metadata={"description": "Pixel learning rate of the condenser."})
    batch_real: int = field(default=256, metadata={"description": "Real records per class per condenser step."})
    reference: Literal["teacher", "random"] = field(
        default="teacher", metadata={"description": "Condenser feature extractor: trained teacher or a random network."}
    )

    def __post_init__(self) -> None:
        if self.mode not in GUIDANCE_MODES:
            raise ConfigurationError(f"guidance.mode must be one of {', '.join(GUIDANCE_MODES)}, got {self.mode!r}")
        if self.spc is not None and self.spc < 1:
            raise ConfigurationError(f"guidance.spc must be >= 1, got {self.spc}")
        if self.method not in ("dm", "fewshot"):
            raise ConfigurationError(f"guidance.method must be dm or fewshot, got {self.method!r}")


@dataclass(kw_only=True)
class HarnessContext:
    out_dir: str = field(default="runs", metadata={"description": "Root of all run directories.", "env": "CSKD_OUT"})
    record_wall_time: bool = field(
        default=False, metadata={"description": "Write per-epoch wall time into the metrics (breaks byte-identity)."}
    )
    probe_path: Optional[str] = field(
        default=None, metadata={"description": "Labeled set used only for the alignment metric; defaults to guidance."}
    )
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2], metadata={"description": "Seeds of study runs."})
    spc_list: List[int] = field(default_factory=lambda: [1, 10, 50], metadata={"description": "Scaling-study spc values."})
    condensed_template: str = field(
        default="condensed/spc{spc}",
        metadata={"description": "Scaling-study set path, formatted with spc, relative to out_dir unless absolute."},
    )
    projection: Literal["pca", "tsne"] = field(default="tsne", metadata={"description": "2-D projection method."})
    baseline: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=50, optimizer="sgd", lr=0.01, val_fraction=0.0),
        metadata={"description": "Hyperparameters of the guidance-only student baseline."},
    )

    def __post_init__(self) -> None:
        env_fallback(self)


@dataclass(kw_only=True)
class RunConfig:
    """Everything a command needs; serialised as the run's ``config.json``."""

    mode: Literal["datafree", "plus_cs", "star"] = field(
        default="star", metadata={"description": "datafree, plus_cs (pool inclusion only) or star (guided inversion)."}
    )
    dataset: DatasetContext = field(default_factory=DatasetContext)
    teacher: TeacherContext = field(default_factory=TeacherContext)
    student: StudentContext = field(default_factory=StudentContext)
    guidance: GuidanceContext = field(default_factory=GuidanceContext)
    inversion: InversionConfig = field(default_factory=InversionConfig)
    kd: KDConfig = field(default_factory=KDConfig)
    harness: HarnessContext = field(default_factory=HarnessContext)
    seed: Optional[int] = field(default=None, metadata={"description": "Base seed of every stochastic step."})
    device: str = field(default="auto", metadata={"description": "cpu, cuda, cuda:N or auto.", "env": "CSKD_DEVICE"})

    def __post_init__(self) -> None:
        env_fallback(self)
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")

    def validate(self, command: str = "distill") -> None:
        """Check the keys ``command`` needs.

        Raises:
            ConfigurationError: the seed or a mode-specific key is missing.
        """
        if self.seed is None:
            raise ConfigurationError("seed is mandatory: set 'seed' in the config or pass --seed")
        if command == "distill" and self.teacher.checkpoint is None:
            raise ConfigurationError("teacher.checkpoint is required")
        if command == "distill":
            if self.guidance.mode == "condensed" and not self.guidance.path:
                raise ConfigurationError("guidance.mode=condensed requires guidance.path")
            if self.guidance.mode == "fewshot" and self.guidance.spc is None:
                raise ConfigurationError("guidance.mode=fewshot requires guidance.spc")
            if self.mode != "datafree" and self.guidance.mode == "none":
                logger.warning("mode %s without guidance runs the data-free code path", self.mode)
        if command == "condense" and self.guidance.spc is None:
            raise ConfigurationError("condense requires guidance.spc (or --spc)")

    @property
    def uses_guidance(self) -> bool:
        return self.mode != "datafree" and self.guidance.mode != "none"
