"""Feature discriminator: scores (penultimate feature, one-hot class) records."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from src.cskd.errors import ConfigurationError, DimensionError


@dataclass(frozen=True, kw_only=True)
class DiscriminatorSpec:
    feat_dim: int = field(metadata={"description": "Penultimate feature width d_feat."})
    num_classes: int = field(metadata={"description": "Number of classes nc."})
    hidden: int = field(default=1024, metadata={"description": "Hidden layer width."})
    dropout_rate: float = field(default=0.5, metadata={"description": "Dropout after the hidden ReLU."})
    conditional: bool = field(
        default=True,
        metadata={"description": "Use the class vector; when false it is masked to zeros (generic alignment)."},
    )


class Discriminator(nn.Module):
    """Linear(d_feat + nc -> hidden) -> ReLU -> Dropout -> Linear(hidden -> 1).

    Returns raw scores of shape (B,); the sigmoid lives in the loss.
    """

    def __init__(self, spec: DiscriminatorSpec) -> None:
        super().__init__()
        self.spec = spec
        self.net = nn.Sequential(
            nn.Linear(spec.feat_dim + spec.num_classes, spec.hidden),
            nn.ReLU(inplace=True),
            nn.Dropout(spec.dropout_rate),
            nn.Linear(spec.hidden, 1),
        )

    @property
    def input_width(self) -> int:
        return self.spec.feat_dim + self.spec.num_classes

    def forward(self, features: torch.Tensor, class_onehot: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.spec.feat_dim or class_onehot.shape[-1] != self.spec.num_classes:
            raise DimensionError(
                f"discriminator expects ({self.spec.feat_dim}, {self.spec.num_classes}) wide inputs, "
                f"got ({features.shape[-1]}, {class_onehot.shape[-1]})"
            )
        if not self.spec.conditional:
            class_onehot = torch.zeros_like(class_onehot)
        x = torch.cat([features, class_onehot.to(features.dtype)], dim=1)
        return self.net(x).squeeze(1)


def build_discriminator(spec: DiscriminatorSpec) -> Discriminator:
    if spec.feat_dim < 1:
        raise ConfigurationError(f"feat_dim must be >= 1, got {spec.feat_dim}")
    if spec.num_classes < 2:
        raise ConfigurationError(f"num_classes must be >= 2, got {spec.num_classes}")
    return Discriminator(spec)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
