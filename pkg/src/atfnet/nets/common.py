"""Shared layers: the conv+norm+ReLU block, normalization factory, seeded init."""

import math

import torch
import torch.nn as nn

from ..errors import ShapeError


def make_norm(mode, channels):
    if mode == "batch":
        return nn.BatchNorm2d(channels)
    if mode == "group":
        # single group = per-sample normalization over all channels and pixels;
        # batch-free, so batch size 1 and 1x1 spatial maps behave in tests
        return nn.GroupNorm(1, channels)
    if mode == "none":
        return nn.Identity()
    raise ValueError(f"unknown normalization mode {mode!r}")


class BConv(nn.Module):
    """3x3 convolution (stride 1, padding 1) -> normalization -> ReLU."""

    def __init__(self, in_channels, out_channels, norm="group"):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm = make_norm(norm, out_channels)
        self.in_channels = in_channels

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"BConv expects {self.in_channels} channels, got {x.shape[1]}")
        return torch.relu(self.norm(self.conv(x)))


def init_parameters(module: nn.Module, generator: torch.Generator) -> nn.Module:
    """He-style fan-in init of every conv, reproducible from the generator.

    Parameters are visited in named order, so the same seed always produces
    the same weights for the same architecture.
    """
    for name, m in sorted(module.named_modules(), key=lambda kv: kv[0]):
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * std)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, (nn.BatchNorm2d, nn.GroupNorm)):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
    return module


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
