"""Latent-to-image generators used by model inversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import torch
from torch import nn
from torch.nn.utils import spectral_norm as sn

from src.cskd.errors import ConfigurationError

Activation = Literal["sigmoid", "tanh"]


@dataclass(frozen=True, kw_only=True)
class GeneratorSpec:
    nz: int = field(default=256, metadata={"description": "Latent dimension."})
    out_shape: Tuple[int, int, int] = field(
        default=(3, 32, 32), metadata={"description": "(channels, H, W) produced by the network."}
    )
    final_activation: Activation = field(default="sigmoid", metadata={"description": "sigmoid or tanh."})
    spectral_norm: bool = field(
        default=False,
        metadata={"description": "Spectral-normalised convolutions plus a trailing batch norm."},
    )
    crop_to: Optional[Tuple[int, int]] = field(
        default=None, metadata={"description": "Centre-crop the output to (H, W) after generation."}
    )
    base_channels: int = field(default=128, metadata={"description": "Width of the seed grid."})


class Generator(nn.Module):
    """Linear -> BN -> 2x(Upsample, Conv-BN-ReLU) -> Conv -> activation [-> BN]."""

    def __init__(self, spec: GeneratorSpec) -> None:
        super().__init__()
        self.spec = spec
        channels, height, width = spec.out_shape
        ngf = spec.base_channels
        self.init_size = (height // 4, width // 4)
        wrap = sn if spec.spectral_norm else (lambda m: m)

        self.project = nn.Linear(spec.nz, ngf * self.init_size[0] * self.init_size[1])
        self.bn0 = nn.BatchNorm2d(ngf)
        self.block1 = nn.Sequential(
            nn.Upsample(scale_factor=2),
            wrap(nn.Conv2d(ngf, ngf, 3, padding=1, bias=False)),
            nn.BatchNorm2d(ngf),
            nn.ReLU(inplace=True),
        )
        self.block2 = nn.Sequential(
            nn.Upsample(scale_factor=2),
            wrap(nn.Conv2d(ngf, ngf // 2, 3, padding=1, bias=False)),
            nn.BatchNorm2d(ngf // 2),
            nn.ReLU(inplace=True),
        )
        out = [wrap(nn.Conv2d(ngf // 2, channels, 3, padding=1))]
        out.append(nn.Sigmoid() if spec.final_activation == "sigmoid" else nn.Tanh())
        if spec.spectral_norm:
            out.append(nn.BatchNorm2d(channels))
        self.output = nn.Sequential(*out)

    @property
    def nz(self) -> int:
        return self.spec.nz

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.project(z).view(z.shape[0], -1, *self.init_size)
        x = self.output(self.block2(self.block1(self.bn0(x))))
        if self.spec.crop_to is not None:
            x = center_crop(x, self.spec.crop_to)
        return x

    def to_unit_range(self, x: torch.Tensor) -> torch.Tensor:
        """Map generator output to the [0, 1] image domain."""
        if self.spec.final_activation == "tanh":
            return (x + 1.0) * 0.5
        return x


def center_crop(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    h, w = x.shape[-2:]
    th, tw = size
    top, left = (h - th) // 2, (w - tw) // 2
    return x[..., top : top + th, left : left + tw]


def build_generator(spec: GeneratorSpec) -> Generator:
    """Build a generator after validating ``spec``.

    Raises:
        ConfigurationError: bad latent size, activation, or spatial dims that are
            not divisible by 4 (two 2x upsamples from a quarter-size seed grid).
    """
    if spec.nz < 1:
        raise ConfigurationError(f"nz must be >= 1, got {spec.nz}")
    if spec.final_activation not in ("sigmoid", "tanh"):
        raise ConfigurationError(f"final_activation must be sigmoid or tanh, got {spec.final_activation!r}")
    channels, height, width = spec.out_shape
    if channels < 1 or height % 4 or width % 4 or height < 4 or width < 4:
        raise ConfigurationError(
            f"generator out_shape spatial dims must be divisible by 4, got {height}x{width}; "
            "use generator_spec_for() to pad and crop"
        )
    if spec.crop_to is not None and (spec.crop_to[0] > height or spec.crop_to[1] > width):
        raise ConfigurationError(f"crop {spec.crop_to} is larger than the output {height}x{width}")
    return Generator(spec)


def generator_spec_for(
    input_shape: Tuple[int, int, int],
    nz: int = 256,
    variant: Literal["fast", "pre_dfkd"] = "fast",
) -> GeneratorSpec:
    """Generator spec that feeds a classifier with ``input_shape``.

    Sizes that are not multiples of 8 are generated at the next multiple and
    centre-cropped (28x28 -> 32x32 -> 28x28).
    """
    channels, height, width = input_shape
    padded = (channels, -(-height // 8) * 8, -(-width // 8) * 8)
    crop = None if padded[1:] == (height, width) else (height, width)
    if variant == "pre_dfkd":
        return GeneratorSpec(nz=nz, out_shape=padded, final_activation="tanh", spectral_norm=True, crop_to=crop)
    if variant != "fast":
        raise ConfigurationError(f"unknown generator variant {variant!r}; valid: fast, pre_dfkd")
    return GeneratorSpec(nz=nz, out_shape=padded, final_activation="sigmoid", spectral_norm=False, crop_to=crop)
