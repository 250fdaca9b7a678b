"""Encoder feature aggregation: per-level fusion of the three modality
pyramids with a running aggregate carried down the encoder.

Per level, channel-halved depth and flow features form a position-by-position
attention matrix (row-softmax over key positions). The attended flow feature
is concatenated with the raw depth feature, projected back to half width, and
max-pooled to give the depth-flow fusion; gating the halved RGB feature with
it and concatenating the result with that RGB feature yields the level's
contribution, which a BConv merges with the (2x downsampled) aggregate from
the previous level.

For large token counts the attention product is evaluated in exact row
blocks, so the full (wh)x(wh) matrix is never materialized unless
intermediates are requested.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ChannelError, ShapeError
from .common import BConv

# rows per block when streaming the attention product; one block of
# (wh) columns at fp32 stays near 500 MB for 352x352 level-1 features
ATTN_BLOCK_ROWS = 4096


@dataclass
class MeaIntermediates:
    attn: torch.Tensor    # (N, wh, wh) row-stochastic
    fused: torch.Tensor   # (N, c/2, w, h) depth-flow fusion
    merged: torch.Tensor  # (N, c_fuse, w, h) RGB-incorporated feature


def _attended_flow(flow_flat, depth_q, materialize):
    """softmax(depth_q @ flow_flat, rows) applied back onto flow_flat.

    flow_flat: (N, c2, L) keys/values; depth_q: (N, L, c2) queries.
    Returns (attended (N, c2, L), attn or None). Large inputs stream in row
    blocks, which is the same computation evaluated piecewise.
    """
    n, c2, length = flow_flat.shape
    if materialize or length <= ATTN_BLOCK_ROWS:
        attn = torch.softmax(torch.bmm(depth_q, flow_flat), dim=-1)
        return torch.bmm(flow_flat, attn), attn
    parts = []
    inplace = not torch.is_grad_enabled()
    for start in range(0, length, ATTN_BLOCK_ROWS):
        stop = min(start + ATTN_BLOCK_ROWS, length)
        block = torch.bmm(depth_q[:, start:stop], flow_flat)
        if inplace:
            block.sub_(block.amax(dim=-1, keepdim=True)).exp_()
            block.div_(block.sum(dim=-1, keepdim=True))
        else:
            block = torch.softmax(block, dim=-1)
        parts.append(torch.bmm(flow_flat[:, :, start:stop], block))
    return sum(parts), None


class MeaModule(nn.Module):
    def __init__(self, channels, c_fuse, norm="group", has_prev=True):
        super().__init__()
        if channels % 2:
            raise ChannelError(f"encoder width {channels} must be even")
        half = channels // 2
        self.channels = channels
        self.has_prev = has_prev
        self.reduce_rgb = nn.Conv2d(channels, half, 1)
        self.reduce_flow = nn.Conv2d(channels, half, 1)
        self.reduce_depth = nn.Conv2d(channels, half, 1)
        self.fuse_proj = nn.Conv2d(channels + half, half, 1)
        self.merge = BConv(channels, c_fuse, norm)
        self.aggregate = BConv(2 * c_fuse if has_prev else c_fuse, c_fuse, norm)

    def forward(self, feat_rgb, feat_flow, feat_depth, prev=None, return_intermediates=False):
        if feat_rgb.shape != feat_flow.shape or feat_rgb.shape != feat_depth.shape:
            raise ShapeError("modality features must share one shape")
        if feat_rgb.shape[1] != self.channels:
            raise ChannelError(f"expected {self.channels} channels, got {feat_rgb.shape[1]}")
        if self.has_prev != (prev is not None):
            raise ShapeError("previous aggregate required exactly when the module has one")
        n, c, w, h = feat_rgb.shape
        half = c // 2

        rgb_half = self.reduce_rgb(feat_rgb)
        flow_flat = self.reduce_flow(feat_flow).reshape(n, half, w * h)
        depth_q = self.reduce_depth(feat_depth).reshape(n, half, w * h).transpose(1, 2)

        attended, attn = _attended_flow(flow_flat, depth_q, return_intermediates)
        attended = attended.reshape(n, half, w, h)
        fused = F.max_pool2d(
            self.fuse_proj(torch.cat([feat_depth, attended], dim=1)),
            kernel_size=3, stride=1, padding=1,
        )
        merged = self.merge(torch.cat([rgb_half * fused, rgb_half], dim=1))
        if self.has_prev:
            prev_down = F.max_pool2d(prev, 2)
            if prev_down.shape[-2:] != merged.shape[-2:]:
                raise ShapeError(
                    f"previous aggregate {tuple(prev.shape[-2:])} does not downsample "
                    f"to level size {tuple(merged.shape[-2:])}"
                )
            agg = self.aggregate(torch.cat([prev_down, merged], dim=1))
        else:
            agg = self.aggregate(merged)
        if return_intermediates:
            return agg, MeaIntermediates(attn=attn, fused=fused, merged=merged)
        return agg


class ConcatEncoderFusion(nn.Module):
    """Ablation fallback: plain concatenation and a 1x1 projection."""

    def __init__(self, channels, n_modalities, c_fuse, has_prev=True):
        super().__init__()
        self.has_prev = has_prev
        in_ch = channels * n_modalities + (c_fuse if has_prev else 0)
        self.proj = nn.Conv2d(in_ch, c_fuse, 1)

    def forward(self, feats, prev=None):
        parts = list(feats)
        if self.has_prev:
            if prev is None:
                raise ShapeError("previous aggregate required")
            parts.append(F.max_pool2d(prev, 2))
        return self.proj(torch.cat(parts, dim=1))


def mea_forward(module: MeaModule, feat_rgb, feat_flow, feat_depth, prev=None,
                return_intermediates=True):
    """Functional entry used by tests; returns (aggregate, intermediates)."""
    return module(feat_rgb, feat_flow, feat_depth, prev,
                  return_intermediates=return_intermediates)
