"""Decoder feature aggregation: attention blocks transfer flow/depth/carry
features onto the RGB decoder feature, and a residual update advances the
integration carry up the decoder.

Each attention block compares per-position feature columns of the reference
R against a source (P or Q) by cosine similarity, hard-selects the best
source position per reference position (lowest index on ties), gates the
gathered feature with the similarity value, and fuses everything with a
BConv. Gradients flow through the similarity values and the gathered
features but not through the discrete index selection.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeError
from .common import BConv

NORM_EPS = 1e-8
ROW_BLOCK = 4096


@dataclass
class AttentionIntermediates:
    sim_p: torch.Tensor      # (N, L, L) cosine similarities R vs P
    sim_q: torch.Tensor
    index_p: torch.Tensor    # (N, L) argmax source position per reference position
    index_q: torch.Tensor
    value_p: torch.Tensor    # (N, L) max similarity per reference position
    value_q: torch.Tensor
    transfer_p: torch.Tensor  # (N, c1, L) gathered source columns
    transfer_q: torch.Tensor
    gated_p: torch.Tensor    # (N, c1, w, h)
    gated_q: torch.Tensor


def _normalize_columns(flat):
    return flat / (flat.norm(dim=1, keepdim=True) + NORM_EPS)


def relevance_embedding(ref_flat, src_flat):
    """Pairwise cosine similarity between feature columns: out[m, n] compares
    reference position m with source position n."""
    if ref_flat.shape != src_flat.shape:
        raise ShapeError("reference and source must share shape (.., c, L)")
    squeeze = ref_flat.ndim == 2
    if squeeze:
        ref_flat, src_flat = ref_flat[None], src_flat[None]
    sim = torch.bmm(_normalize_columns(ref_flat).transpose(1, 2), _normalize_columns(src_flat))
    return sim[0] if squeeze else sim


def _lowest_argmax(sim_rows):
    """Max over the last dim; torch.max returns the lowest index on ties
    (asserted by a regression test so the contract stays pinned)."""
    return sim_rows.max(dim=-1)


def _best_match(ref_flat, src_flat, materialize):
    """Per reference position: max cosine similarity and its source index."""
    ref_n = _normalize_columns(ref_flat)
    src_n = _normalize_columns(src_flat)
    length = ref_flat.shape[-1]
    if materialize or length <= ROW_BLOCK:
        sim = torch.bmm(ref_n.transpose(1, 2), src_n)
        values, index = _lowest_argmax(sim)
        return values, index, sim
    vals, idxs = [], []
    for start in range(0, length, ROW_BLOCK):
        stop = min(start + ROW_BLOCK, length)
        block = torch.bmm(ref_n[:, :, start:stop].transpose(1, 2), src_n)
        v, i = _lowest_argmax(block)
        vals.append(v)
        idxs.append(i)
    return torch.cat(vals, dim=1), torch.cat(idxs, dim=1), None


class AttentionBlock(nn.Module):
    def __init__(self, channels, norm="group"):
        super().__init__()
        self.channels = channels
        self.proj_p = nn.Conv2d(2 * channels, channels, 1)
        self.proj_q = nn.Conv2d(2 * channels, channels, 1)
        self.fuse = BConv(3 * channels, channels, norm)

    def _transfer(self, ref_flat, src_flat, proj, shape, materialize, match=None):
        n, c, w, h = shape
        if match is None:
            value, index, sim = _best_match(ref_flat, src_flat, materialize)
        else:
            value, index, sim = match
        transfer = torch.gather(src_flat, 2, index.unsqueeze(1).expand(n, c, -1))
        stacked = torch.cat([ref_flat, transfer], dim=1).reshape(n, 2 * c, w, h)
        gated = proj(stacked) * value.reshape(n, 1, w, h)
        return gated, (sim, index, value, transfer)

    def forward(self, ref, src_p, src_q, return_intermediates=False,
                match_p=None, match_q=None):
        if ref.shape != src_p.shape or ref.shape != src_q.shape:
            raise ShapeError("attention block inputs must share one shape")
        if ref.shape[1] != self.channels:
            raise ShapeError(f"expected {self.channels} channels, got {ref.shape[1]}")
        n, c, w, h = ref.shape
        ref_flat = ref.reshape(n, c, w * h)
        p_flat = src_p.reshape(n, c, w * h)
        q_flat = src_q.reshape(n, c, w * h)
        gated_p, parts_p = self._transfer(ref_flat, p_flat, self.proj_p, ref.shape,
                                          return_intermediates, match_p)
        gated_q, parts_q = self._transfer(ref_flat, q_flat, self.proj_q, ref.shape,
                                          return_intermediates, match_q)
        out = self.fuse(torch.cat([ref, gated_p, gated_q], dim=1))
        if return_intermediates:
            inter = AttentionIntermediates(
                sim_p=parts_p[0], sim_q=parts_q[0],
                index_p=parts_p[1], index_q=parts_q[1],
                value_p=parts_p[2], value_q=parts_q[2],
                transfer_p=parts_p[3], transfer_q=parts_q[3],
                gated_p=gated_p, gated_q=gated_q,
            )
            return out, inter
        return out


class ConcatAttentionBlock(nn.Module):
    """Attention-free variant: fuse the three inputs with a single BConv."""

    def __init__(self, channels, norm="group"):
        super().__init__()
        self.fuse = BConv(3 * channels, channels, norm)

    def forward(self, ref, src_p, src_q, return_intermediates=False):
        out = self.fuse(torch.cat([ref, src_p, src_q], dim=1))
        return (out, None) if return_intermediates else out


class MdaModule(nn.Module):
    """One decoder-side fusion step: three attention blocks pair the RGB
    decoder feature with (flow, depth), (flow, carry), and (depth, carry);
    their channel-softmaxed concatenation, projected and max-pooled, updates
    the 2x-upsampled carry residually."""

    def __init__(self, channels, norm="group", use_attention=True):
        super().__init__()
        block = AttentionBlock if use_attention else ConcatAttentionBlock
        self.block_fd = block(channels, norm)
        self.block_fc = block(channels, norm)
        self.block_dc = block(channels, norm)
        self.proj = nn.Conv2d(3 * channels, channels, 1)

    def forward(self, k_rgb, k_flow, k_depth, prev):
        prev_up = F.interpolate(prev, scale_factor=2, mode="bilinear", align_corners=False)
        if prev_up.shape[-2:] != k_rgb.shape[-2:]:
            raise ShapeError(
                f"carry {tuple(prev.shape[-2:])} does not upsample to {tuple(k_rgb.shape[-2:])}"
            )
        if isinstance(self.block_fd, AttentionBlock):
            # the similarity match depends only on the inputs, and each of the
            # three pairings appears in two blocks: compute each match once
            n, c, w, h = k_rgb.shape
            ref = k_rgb.reshape(n, c, w * h)
            matches = {
                name: _best_match(ref, src.reshape(n, c, w * h), False)
                for name, src in (("flow", k_flow), ("depth", k_depth), ("carry", prev_up))
            }
            d1 = self.block_fd(k_rgb, k_flow, k_depth,
                               match_p=matches["flow"], match_q=matches["depth"])
            d2 = self.block_fc(k_rgb, k_flow, prev_up,
                               match_p=matches["flow"], match_q=matches["carry"])
            d3 = self.block_dc(k_rgb, k_depth, prev_up,
                               match_p=matches["depth"], match_q=matches["carry"])
        else:
            d1 = self.block_fd(k_rgb, k_flow, k_depth)
            d2 = self.block_fc(k_rgb, k_flow, prev_up)
            d3 = self.block_dc(k_rgb, k_depth, prev_up)
        mixed = torch.softmax(torch.cat([d1, d2, d3], dim=1), dim=1)
        return prev_up + F.max_pool2d(self.proj(mixed), kernel_size=3, stride=1, padding=1)


class ConcatDecoderFusion(nn.Module):
    """Ablation fallback: concatenate available decoder features with the
    upsampled carry and project."""

    def __init__(self, channels, n_modalities):
        super().__init__()
        self.proj = nn.Conv2d(channels * (n_modalities + 1), channels, 1)

    def forward(self, feats, prev):
        prev_up = F.interpolate(prev, scale_factor=2, mode="bilinear", align_corners=False)
        return self.proj(torch.cat([*feats, prev_up], dim=1))


def attention_block(block: AttentionBlock, ref, src_p, src_q, return_intermediates=True):
    return block(ref, src_p, src_q, return_intermediates=return_intermediates)


def mda_forward(module: MdaModule, k_rgb, k_flow, k_depth, prev):
    return module(k_rgb, k_flow, k_depth, prev)
