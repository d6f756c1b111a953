"""Field-to-field operator model split into embed / backbone / recover.

The embedding lifts the (normalized) input channels into a latent field, the
backbone is a stack of residual convolution blocks operating latent-to-latent
(this is the transferable parameter set), and the recovery head projects the
latent field onto the output channels. Heads are cheap and task-specific;
the backbone carries the bulk of the parameters and is what pretraining and
cross-task transfer reuse.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError


@dataclass(frozen=True)
class ModelSpec:
    in_channels: int
    out_channels: int
    width: int = 48
    depth: int = 6

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.width,
               self.depth) < 1:
            raise ConfigError(f"all model dimensions must be >= 1: {self}")

    def to_json(self) -> dict:
        return {"in_channels": self.in_channels,
                "out_channels": self.out_channels,
                "width": self.width, "depth": self.depth}

    @staticmethod
    def from_json(obj: dict) -> "ModelSpec":
        return ModelSpec(**{k: int(obj[k]) for k in
                            ("in_channels", "out_channels", "width", "depth")})


class _ResBlock(nn.Module):
    """Residual conv block with a globally pooled pathway.

    Temperature fields carry a long-range component (total dissipated power
    sets the overall rise) that stacked 3x3 convolutions propagate too
    slowly; the pooled branch feeds it back as a per-channel bias in one
    hop.
    """

    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.mix = nn.Linear(width, width)
        self.act = nn.GELU()

    def forward(self, x):
        local = self.conv2(self.act(self.conv1(x)))
        pooled = self.mix(self.act(x.mean(dim=(2, 3))))
        return x + local + pooled[:, :, None, None]


def _make_embed(in_channels: int, width: int) -> nn.Module:
    return nn.Sequential(nn.Conv2d(in_channels, width, 3, padding=1),
                         nn.GELU())


def _make_recover(width: int, out_channels: int) -> nn.Module:
    return nn.Conv2d(width, out_channels, 3, padding=1)


class OperatorModel(nn.Module):
    """embed -> backbone -> recover; forward maps (B, C, H, W) -> (B, F, H, W)."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.spec = spec
        self.embed = _make_embed(spec.in_channels, spec.width)
        self.backbone = nn.Sequential(
            *(_ResBlock(spec.width) for _ in range(spec.depth)))
        self.recover = _make_recover(spec.width, spec.out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ConfigError(
                f"input must be (B, {self.spec.in_channels}, H, W), "
                f"got {tuple(x.shape)}")
        return self.recover(self.backbone(self.embed(x)))

    def reinit_heads(self, in_channels: int, out_channels: int,
                     seed: int = 0) -> "OperatorModel":
        """Fresh embedding/recovery for a new task, backbone kept as-is."""
        torch.manual_seed(seed)
        self.spec = ModelSpec(in_channels, out_channels,
                              self.spec.width, self.spec.depth)
        self.embed = _make_embed(in_channels, self.spec.width)
        self.recover = _make_recover(self.spec.width, out_channels)
        return self

    def head_parameters(self):
        yield from self.embed.parameters()
        yield from self.recover.parameters()

    def backbone_parameters(self):
        yield from self.backbone.parameters()

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
