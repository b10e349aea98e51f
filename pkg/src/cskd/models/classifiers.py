"""Classifier zoo used for teachers, students and condensation references.

Every classifier splits into a feature extractor that ends at the penultimate
layer and a single linear ``head``. Inputs are images in [0, 1]; the
per-channel normalisation a model was trained with is stored in buffers and
applied inside ``forward``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.cskd.errors import ConfigurationError, DimensionError, RegistryError


@dataclass(frozen=True, kw_only=True)
class ClassifierSpec:
    """Identifies an architecture and the data it is built for."""

    arch_id: str = field(metadata={"description": "Registry key of the architecture."})
    num_classes: int = field(metadata={"description": "Number of output classes (nc)."})
    input_shape: Tuple[int, int, int] = field(
        metadata={"description": "(channels, height, width) of the input images."}
    )

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ConfigurationError(f"num_classes must be positive, got {self.num_classes}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigurationError(f"input_shape must be (C, H, W), got {self.input_shape}")
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))


class Classifier(nn.Module):
    """Base class: ``features`` -> penultimate vector -> ``head`` -> logits."""

    arch_id: str = ""

    def __init__(self, feat_dim: int, num_classes: int, input_shape: Tuple[int, int, int]) -> None:
        super().__init__()
        self.feat_dim = feat_dim
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        self.head = nn.Linear(feat_dim, num_classes)
        channels = input_shape[0]
        self.register_buffer("norm_mean", torch.zeros(1, channels, 1, 1))
        self.register_buffer("norm_std", torch.ones(1, channels, 1, 1))

    def set_normalization(self, mean: Sequence[float], std: Sequence[float]) -> None:
        channels = self.input_shape[0]
        if len(mean) != channels or len(std) != channels:
            raise DimensionError(f"normalization needs {channels} channel values, got {len(mean)}/{len(std)}")
        self.norm_mean.copy_(torch.tensor(mean, dtype=self.norm_mean.dtype).view(1, channels, 1, 1))
        self.norm_std.copy_(torch.tensor(std, dtype=self.norm_std.dtype).view(1, channels, 1, 1))

    def check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise DimensionError(
                f"{self.arch_id} expects batches of shape (B, {', '.join(map(str, self.input_shape))}), "
                f"got {tuple(x.shape)}"
            )

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def penultimate(self, x: torch.Tensor) -> torch.Tensor:
        """Features immediately before ``head``, shape (B, feat_dim)."""
        self.check_input(x)
        return self.extract((x - self.norm_mean) / self.norm_std)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.penultimate(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.logits(x)


class LeNet5(Classifier):
    """LeNet-5 with batch norm after each convolution."""

    arch_id = "lenet5"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int], width: int = 1) -> None:
        c1, c2, f1, f2 = 6 * width, 16 * width, 120 * width, 84 * width
        super().__init__(f2, num_classes, input_shape)
        self.conv = nn.Sequential(
            nn.Conv2d(input_shape[0], c1, 5, padding=2),
            nn.BatchNorm2d(c1),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(c1, c2, 5),
            nn.BatchNorm2d(c2),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.AdaptiveAvgPool2d((5, 5)),
        )
        self.fc = nn.Sequential(
            nn.Linear(c2 * 25, f1),
            nn.ReLU(inplace=True),
            nn.Linear(f1, f2),
            nn.ReLU(inplace=True),
        )

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(torch.flatten(self.conv(x), 1))


class LeNet5Half(Classifier):
    """Half-width LeNet-5, the small student for MNIST-scale runs."""

    arch_id = "lenet5_half"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int]) -> None:
        super().__init__(42, num_classes, input_shape)
        self.conv = nn.Sequential(
            nn.Conv2d(input_shape[0], 3, 5, padding=2),
            nn.BatchNorm2d(3),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(3, 8, 5),
            nn.BatchNorm2d(8),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.AdaptiveAvgPool2d((5, 5)),
        )
        self.fc = nn.Sequential(
            nn.Linear(8 * 25, 60),
            nn.ReLU(inplace=True),
            nn.Linear(60, 42),
            nn.ReLU(inplace=True),
        )

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(torch.flatten(self.conv(x), 1))


class ConvNet3(Classifier):
    """Three conv-norm-relu-pool stages, the usual dataset-condensation reference net."""

    arch_id = "cnn3"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int], width: int = 128) -> None:
        super().__init__(width, num_classes, input_shape)
        layers = []
        channels = input_shape[0]
        for _ in range(3):
            layers += [
                nn.Conv2d(channels, width, 3, padding=1),
                nn.BatchNorm2d(width),
                nn.ReLU(inplace=True),
                nn.AvgPool2d(2),
            ]
            channels = width
        self.body = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1))

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.body(x), 1)


class BasicBlock(nn.Module):
    def __init__(self, in_planes: int, planes: int, stride: int = 1) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_planes, planes, 1, stride=stride, bias=False),
                nn.BatchNorm2d(planes),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class CifarResNet(Classifier):
    """CIFAR-style ResNet with 6n+2 layers and 16/32/64 channel stages."""

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int], blocks_per_stage: int) -> None:
        super().__init__(64, num_classes, input_shape)
        self.stem = nn.Sequential(
            nn.Conv2d(input_shape[0], 16, 3, padding=1, bias=False),
            nn.BatchNorm2d(16),
            nn.ReLU(inplace=True),
        )
        stages = []
        in_planes = 16
        for planes, stride in ((16, 1), (32, 2), (64, 2)):
            for i in range(blocks_per_stage):
                stages.append(BasicBlock(in_planes, planes, stride if i == 0 else 1))
                in_planes = planes
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.pool(self.stages(self.stem(x))), 1)


class ResNet8(CifarResNet):
    arch_id = "resnet8"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int]) -> None:
        super().__init__(num_classes, input_shape, blocks_per_stage=1)


class ResNet20(CifarResNet):
    arch_id = "resnet20"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int]) -> None:
        super().__init__(num_classes, input_shape, blocks_per_stage=3)


def _separable(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, in_ch, 3, stride=stride, padding=1, groups=in_ch, bias=False),
        nn.BatchNorm2d(in_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(in_ch, out_ch, 1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class MobileSmall(Classifier):
    """Depthwise-separable network in the spirit of MobileNet, sized for 32x32 inputs."""

    arch_id = "mobile_small"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int]) -> None:
        super().__init__(256, num_classes, input_shape)
        self.body = nn.Sequential(
            nn.Conv2d(input_shape[0], 32, 3, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            _separable(32, 64, 1),
            _separable(64, 128, 2),
            _separable(128, 128, 1),
            _separable(128, 256, 2),
            nn.AdaptiveAvgPool2d(1),
        )

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.body(x), 1)


class MLP(Classifier):
    """Two hidden layers, no normalisation layers at all."""

    arch_id = "mlp"

    def __init__(self, num_classes: int, input_shape: Tuple[int, int, int]) -> None:
        super().__init__(128, num_classes, input_shape)
        c, h, w = input_shape
        self.body = nn.Sequential(
            nn.Flatten(),
            nn.Linear(c * h * w, 256),
            nn.ReLU(inplace=True),
            nn.Linear(256, 128),
            nn.ReLU(inplace=True),
        )

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


@dataclass(frozen=True)
class ArchEntry:
    factory: Callable[[int, Tuple[int, int, int]], Classifier]
    feat_dim: int
    min_size: int


# Register all architectures
CLASSIFIERS: Dict[str, ArchEntry] = {
    "lenet5": ArchEntry(LeNet5, 84, 12),
    "lenet5_half": ArchEntry(LeNet5Half, 42, 12),
    "cnn3": ArchEntry(ConvNet3, 128, 8),
    "resnet8": ArchEntry(ResNet8, 64, 4),
    "resnet20": ArchEntry(ResNet20, 64, 4),
    "mobile_small": ArchEntry(MobileSmall, 256, 4),
    "mlp": ArchEntry(MLP, 128, 1),
}


def build_classifier(spec: ClassifierSpec) -> Classifier:
    """Instantiate the architecture named by ``spec``.

    Raises:
        RegistryError: ``spec.arch_id`` is not registered.
        ConfigurationError: the input is too small for the architecture.
    """
    entry = CLASSIFIERS.get(spec.arch_id)
    if entry is None:
        raise RegistryError("architecture", spec.arch_id, CLASSIFIERS)
    _, h, w = spec.input_shape
    if min(h, w) < entry.min_size:
        raise ConfigurationError(
            f"{spec.arch_id} needs inputs of at least {entry.min_size}x{entry.min_size}, got {h}x{w}"
        )
    model = entry.factory(spec.num_classes, spec.input_shape)
    model.arch_id = spec.arch_id
    return model


if __name__ == "__main__":
    for arch_id, entry in CLASSIFIERS.items():
        shape = (1, 28, 28) if arch_id.startswith("lenet5") else (3, 32, 32)
        net = build_classifier(ClassifierSpec(arch_id=arch_id, num_classes=10, input_shape=shape))
        params = sum(p.numel() for p in net.parameters())
        print(f"{arch_id:14s} feat_dim={entry.feat_dim:4d} params={params}")
