"""Per-branch U-Net decoder and the saliency prediction head.

Encoder skips are first projected to a uniform decoder width, then fused
top-down: the deepest level passes through a BConv, every later level
concatenates the 2x-upsampled previous decoder feature with its skip.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeError
from .common import BConv


def upsample2x(x):
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class BranchDecoder(nn.Module):
    def __init__(self, encoder_channels, c_dec, norm="group"):
        super().__init__()
        self.proj = nn.ModuleList(nn.Conv2d(c, c_dec, 1) for c in encoder_channels)
        self.blocks = nn.ModuleList(
            [BConv(c_dec, c_dec, norm)]
            + [BConv(2 * c_dec, c_dec, norm) for _ in range(4)]
        )

    def forward(self, pyramid):
        if len(pyramid) != 5:
            raise ShapeError(f"expected a 5-level pyramid, got {len(pyramid)} levels")
        skips = [proj(f) for proj, f in zip(self.proj, pyramid)]
        d = self.blocks[0](skips[4])            # deepest level
        feats = [d]
        for i in range(3, -1, -1):              # levels 4..1
            d = self.blocks[4 - i](torch.cat([upsample2x(d), skips[i]], dim=1))
            feats.append(d)
        # feats holds [level5, level4, level3, level2, level1]
        return feats


# keeps probabilities strictly inside (0, 1) even where fp32 sigmoid saturates
PROB_EPS = 1e-6


class SaliencyHead(nn.Module):
    """1x1 conv -> sigmoid -> bilinear resize to the requested output size."""

    def __init__(self, in_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, 1, 1)

    def forward(self, feat, out_size):
        prob = torch.sigmoid(self.conv(feat)).clamp(PROB_EPS, 1.0 - PROB_EPS)
        if tuple(feat.shape[-2:]) != tuple(out_size):
            prob = F.interpolate(prob, size=out_size, mode="bilinear", align_corners=False)
        return prob


def bconv(block: BConv, x: torch.Tensor) -> torch.Tensor:
    return block(x)


def decode_branch(decoder: BranchDecoder, pyramid):
    return decoder(pyramid)


def predict_saliency(head: SaliencyHead, d1: torch.Tensor, out_size) -> torch.Tensor:
    return head(d1, out_size)
