"""U-Net with a fixed-width flattened bottleneck.

The encoder halves resolution depth-1 times, then a 1x1 convolution reduces
channels so that spatial area x channels equals ``bottleneck_dim`` exactly;
the flattened result is both the decoder input and the feature vector the
verification stages probe.  Bodies use depthwise-separable 3x3 convolutions
to keep the parameter count small.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ConfigError, ContractError


@dataclass
class UNetConfig:
    depth: int = 5
    convs_per_level: int = 2
    base_channels: int = 16
    input_size: int = 128
    use_depthwise: bool = True
    bottleneck_dim: int = 4096

    def validate(self) -> None:
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.convs_per_level < 1:
            raise ConfigError("convs_per_level must be >= 1")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        stride = 2 ** (self.depth - 1)
        if self.input_size % stride != 0:
            raise ConfigError(
                f"input_size {self.input_size} not divisible by 2^(depth-1) = {stride}"
            )
        side = self.input_size // stride
        if side < 1:
            raise ConfigError("input_size too small for this depth")
        if self.bottleneck_dim % (side * side) != 0:
            raise ConfigError(
                f"bottleneck_dim {self.bottleneck_dim} not divisible by the "
                f"bottleneck area {side}x{side}; cannot realize an exact "
                f"{self.bottleneck_dim}-d flattening"
            )

    @property
    def bottleneck_side(self) -> int:
        return self.input_size // 2 ** (self.depth - 1)

    @property
    def bottleneck_channels(self) -> int:
        return self.bottleneck_dim // self.bottleneck_side**2

    def level_channels(self, level: int) -> int:
        return self.base_channels * 2**level


def _norm_groups(channels: int) -> int:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return groups
    return 1


def _conv3(c_in: int, c_out: int, depthwise: bool) -> nn.Module:
    if depthwise:
        return nn.Sequential(
            nn.Conv2d(c_in, c_in, 3, padding=1, groups=c_in),
            nn.Conv2d(c_in, c_out, 1),
        )
    return nn.Conv2d(c_in, c_out, 3, padding=1)


class ConvBlock(nn.Module):
    """``n_convs`` x (3x3 conv, group norm, ReLU); the first conv moves the
    channel count, the rest keep it."""

    def __init__(self, c_in: int, c_out: int, n_convs: int, depthwise: bool):
        super().__init__()
        layers: list[nn.Module] = []
        for k in range(n_convs):
            layers.append(_conv3(c_in if k == 0 else c_out, c_out, depthwise))
            layers.append(nn.GroupNorm(_norm_groups(c_out), c_out))
            layers.append(nn.ReLU(inplace=True))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class UNetEncoder(nn.Module):
    """Contracting path ending in the flattened fixed-width bottleneck."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.levels = nn.ModuleList()
        c_in = 1
        for level in range(config.depth):
            c_out = config.level_channels(level)
            self.levels.append(
                ConvBlock(c_in, c_out, config.convs_per_level, config.use_depthwise)
            )
            c_in = c_out
        self.pool = nn.MaxPool2d(2)
        self.reduce = nn.Conv2d(c_in, config.bottleneck_channels, 1)

    def _check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ContractError(f"expected a (batch, 1, H, W) tensor, got {tuple(x.shape)}")
        size = self.config.input_size
        if x.shape[2] != size or x.shape[3] != size:
            raise ContractError(
                f"expected {size}x{size} inputs, got {x.shape[2]}x{x.shape[3]}"
            )

    def features(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Bottleneck vector plus per-level skip tensors for the decoder."""
        self._check_input(x)
        skips = []
        for level, block in enumerate(self.levels):
            if level > 0:
                x = self.pool(x)
            x = block(x)
            if level < len(self.levels) - 1:
                skips.append(x)
        x = self.reduce(x)
        return x.flatten(1), skips

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)[0]


class UNetDecoder(nn.Module):
    """Expanding path from the flattened bottleneck back to a full-resolution
    logistic-squashed image, concatenating encoder skips at each level."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        config.validate()
        self.config = config
        bottom = config.level_channels(config.depth - 1)
        self.expand = nn.Conv2d(config.bottleneck_channels, bottom, 1)
        self.up_convs = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for level in range(config.depth - 2, -1, -1):
            c_coarse = config.level_channels(level + 1)
            c_fine = config.level_channels(level)
            self.up_convs.append(_conv3(c_coarse, c_fine, config.use_depthwise))
            self.blocks.append(
                ConvBlock(
                    2 * c_fine, c_fine, config.convs_per_level, config.use_depthwise
                )
            )
        self.head = nn.Conv2d(config.base_channels, 1, 1)

    def forward(self, bottleneck: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        cfg = self.config
        if bottleneck.ndim != 2 or bottleneck.shape[1] != cfg.bottleneck_dim:
            raise ContractError(
                f"expected a (batch, {cfg.bottleneck_dim}) bottleneck, "
                f"got {tuple(bottleneck.shape)}"
            )
        if len(skips) != cfg.depth - 1:
            raise ContractError(f"expected {cfg.depth - 1} skip tensors, got {len(skips)}")
        side = cfg.bottleneck_side
        x = bottleneck.reshape(-1, cfg.bottleneck_channels, side, side)
        x = self.expand(x)
        for up, block, skip in zip(self.up_convs, self.blocks, reversed(skips)):
            x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
            x = up(x)
            x = block(torch.cat([x, skip], dim=1))
        return torch.sigmoid(self.head(x))


class UNet(nn.Module):
    """Encoder plus decoder; forward returns the enhanced image and the
    bottleneck feature so callers never run the encoder twice."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        self.encoder = UNetEncoder(config)
        self.decoder = UNetDecoder(config)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        bottleneck, skips = self.encoder.features(x)
        return self.decoder(bottleneck, skips), bottleneck


def initialize_parameters(module: nn.Module, seed: int) -> nn.Module:
    """He fan-in initialization for conv/linear weights, zero biases, unit
    norm scales; deterministic in ``seed`` and isolated from the global
    torch RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.GroupNorm):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
    return module
