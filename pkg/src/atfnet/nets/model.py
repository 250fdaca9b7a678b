"""Full network: three modality branches plus the integration branch.

The RGB branch always exists; depth and flow branches are config toggles.
Integration runs a per-level encoder fusion chain down the pyramids, seeds a
carry from its deepest aggregate, then walks four decoder fusion steps up
through decoder levels 4..1. The fused head predicts from the final carry.
Ablation toggles swap the attention fusion modules for plain
concatenation+projection, matching the baseline variants.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from ..config import ModelConfig
from ..errors import ConfigError, ShapeError
from .backbone import Encoder
from .common import BConv, count_parameters, init_parameters
from .decoder import BranchDecoder, SaliencyHead
from .mda import ConcatDecoderFusion, MdaModule
from .mea import ConcatEncoderFusion, MeaModule


@dataclass
class SaliencyOutputs:
    s_rgb: torch.Tensor
    s_flow: Optional[torch.Tensor]
    s_depth: Optional[torch.Tensor]
    s_f: torch.Tensor

    def branch_items(self):
        out = [("rgb", self.s_rgb)]
        if self.s_flow is not None:
            out.append(("flow", self.s_flow))
        if self.s_depth is not None:
            out.append(("depth", self.s_depth))
        out.append(("fused", self.s_f))
        return out


class AtfNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.modalities = ["rgb"]
        if config.use_flow_branch:
            self.modalities.append("flow")
        if config.use_depth_branch:
            self.modalities.append("depth")
        norm = config.normalization

        self.encoders = nn.ModuleDict(
            {m: Encoder(config, m) for m in self.modalities}
        )
        self.decoders = nn.ModuleDict(
            {m: BranchDecoder(config.encoder_channels, config.c_dec, norm) for m in self.modalities}
        )
        self.heads = nn.ModuleDict({m: SaliencyHead(config.c_dec) for m in self.modalities})

        full_mea = config.use_mea and config.use_flow_branch and config.use_depth_branch
        self.encoder_fusion = nn.ModuleList()
        for i, ch in enumerate(config.encoder_channels):
            if full_mea:
                self.encoder_fusion.append(
                    MeaModule(ch, config.c_fuse, norm, has_prev=i > 0)
                )
            else:
                self.encoder_fusion.append(
                    ConcatEncoderFusion(ch, len(self.modalities), config.c_fuse, has_prev=i > 0)
                )
        self.full_mea = full_mea

        self.carry_seed = BConv(config.c_fuse, config.c_fuse, norm)

        full_mda = config.use_mda and config.use_flow_branch and config.use_depth_branch
        self.k_proj = nn.ModuleDict(
            {
                m: nn.ModuleList(nn.Conv2d(config.c_dec, config.c_fuse, 1) for _ in range(4))
                for m in self.modalities
            }
        )
        self.decoder_fusion = nn.ModuleList()
        for _ in range(4):
            if full_mda:
                self.decoder_fusion.append(
                    MdaModule(config.c_fuse, norm, use_attention=config.use_attention_blocks)
                )
            else:
                self.decoder_fusion.append(ConcatDecoderFusion(config.c_fuse, len(self.modalities)))
        self.full_mda = full_mda

        self.fused_head = SaliencyHead(config.c_fuse)

    def _check_inputs(self, rgb, depth, flow):
        if rgb is None or rgb.ndim != 4 or rgb.shape[1] != 3:
            raise ShapeError("rgb input must be (N, 3, H, W)")
        inputs = {"rgb": rgb}
        if self.config.use_depth_branch:
            if depth is None:
                raise ConfigError("depth branch enabled but no depth input given")
            if depth.ndim != 4 or depth.shape[1] != 1:
                raise ShapeError("depth input must be (N, 1, H, W)")
            inputs["depth"] = depth
        if self.config.use_flow_branch:
            if flow is None:
                raise ConfigError("flow branch enabled but no flow input given")
            want = self.config.flow_channels
            if flow.ndim != 4 or flow.shape[1] != want:
                raise ShapeError(f"flow input must be (N, {want}, H, W) for {self.config.flow_input}")
            inputs["flow"] = flow
        sizes = {m: tuple(t.shape[-2:]) for m, t in inputs.items()}
        if len(set(sizes.values())) != 1:
            raise ShapeError(f"input sizes disagree: {sizes}")
        h, w = rgb.shape[-2:]
        if h % 32 or w % 32:
            raise ShapeError(f"input size {h}x{w} not divisible by 32")
        return inputs

    def forward(self, rgb, depth=None, flow=None) -> SaliencyOutputs:
        inputs = self._check_inputs(rgb, depth, flow)
        out_size = tuple(rgb.shape[-2:])

        pyramids = {m: self.encoders[m](inputs[m]) for m in self.modalities}
        dec_feats = {m: self.decoders[m](pyramids[m]) for m in self.modalities}
        branch_maps = {m: self.heads[m](dec_feats[m][-1], out_size) for m in self.modalities}

        agg = None
        for i, fusion in enumerate(self.encoder_fusion):
            if self.full_mea:
                agg = fusion(
                    pyramids["rgb"][i], pyramids["flow"][i], pyramids["depth"][i],
                    prev=agg,
                )
            else:
                agg = fusion([pyramids[m][i] for m in self.modalities], prev=agg)

        carry = self.carry_seed(agg)
        for j, fusion in enumerate(self.decoder_fusion):
            # decoder feature lists run deepest-first: index j+1 is level 4-j
            k = {m: self.k_proj[m][j](dec_feats[m][j + 1]) for m in self.modalities}
            if self.full_mda:
                carry = fusion(k["rgb"], k["flow"], k["depth"], carry)
            else:
                carry = fusion([k[m] for m in self.modalities], carry)

        s_f = self.fused_head(carry, out_size)
        return SaliencyOutputs(
            s_rgb=branch_maps["rgb"],
            s_flow=branch_maps.get("flow"),
            s_depth=branch_maps.get("depth"),
            s_f=s_f,
        )


def build_model(config: ModelConfig, seed: int) -> AtfNet:
    generator = torch.Generator().manual_seed(int(seed))
    return init_parameters(AtfNet(config), generator)


# Functional aliases matching the operation-style API.
init_params = build_model


def forward(model: AtfNet, rgb, depth=None, flow=None) -> SaliencyOutputs:
    return model(rgb, depth, flow)


def parameter_count(model: AtfNet) -> int:
    return count_parameters(model)
