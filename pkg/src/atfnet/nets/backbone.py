"""Modality-specific encoders producing five-level feature pyramids.

The desk-scale backbone has five stages of
[3x3 conv, norm, ReLU, residual 3x3 conv, stride-2 max pool], so level i
comes out at 1/2^i of the input resolution with config.encoder_channels[i-1]
channels.
"""

import torch
import torch.nn as nn

from ..config import ModelConfig
from ..errors import InvalidConfig, ShapeError
from .common import init_parameters, make_norm

MODALITY_CHANNELS = {"rgb": 3, "depth": 1}


def input_channels(config: ModelConfig, modality: str) -> int:
    if modality == "flow":
        return config.flow_channels
    try:
        return MODALITY_CHANNELS[modality]
    except KeyError:
        raise InvalidConfig(f"unknown modality {modality!r}") from None


class EncoderStage(nn.Module):
    def __init__(self, in_channels, out_channels, norm):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm = make_norm(norm, out_channels)
        self.res_conv = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        y = torch.relu(self.norm(self.conv(x)))
        y = y + self.res_conv(y)
        return self.pool(y)


class Encoder(nn.Module):
    def __init__(self, config: ModelConfig, modality: str):
        super().__init__()
        if config.backbone != "tiny":
            raise InvalidConfig(f"backbone {config.backbone!r} has no bundled weights")
        self.modality = modality
        self.in_channels = input_channels(config, modality)
        chans = [self.in_channels, *config.encoder_channels]
        self.stages = nn.ModuleList(
            EncoderStage(chans[i], chans[i + 1], config.normalization) for i in range(5)
        )

    def forward(self, image):
        if image.ndim != 4:
            raise ShapeError(f"expected NCHW input, got shape {tuple(image.shape)}")
        if image.shape[1] != self.in_channels:
            raise ShapeError(
                f"{self.modality} encoder expects {self.in_channels} channels, got {image.shape[1]}"
            )
        if image.shape[2] % 32 or image.shape[3] % 32:
            raise ShapeError(f"spatial size {image.shape[2:]} not divisible by 32")
        levels = []
        x = image
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return levels


def build_encoder(config: ModelConfig, modality: str, generator: torch.Generator) -> Encoder:
    return init_parameters(Encoder(config, modality), generator)


def encode(encoder: Encoder, image: torch.Tensor):
    """Five-level pyramid, level i at 1/2^i of the input resolution."""
    return encoder(image)
