from .common import BConv, init_parameters, count_parameters
from .backbone import Encoder, build_encoder, encode
from .decoder import BranchDecoder, SaliencyHead, bconv, decode_branch, predict_saliency
from .mea import MeaModule, ConcatEncoderFusion, mea_forward
from .mda import (
    AttentionBlock,
    ConcatDecoderFusion,
    MdaModule,
    attention_block,
    mda_forward,
    relevance_embedding,
)
from .model import AtfNet, SaliencyOutputs, build_model, forward, init_params
