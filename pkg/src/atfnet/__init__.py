"""Attentive triple-fusion saliency detection for RGB-D video: model,
dataset tooling, metric suite, trainer, and CLI."""

__version__ = "0.1.0"

from .config import AugmentPolicy, LossConfig, ModelConfig, TrainConfig
from .dataio import (
    DatasetLayout,
    DatasetStats,
    FrameSample,
    augment_sample,
    dataset_stats,
    load_frame,
    load_layout,
    load_sequence,
    validate_layout,
)
from .fixture import FixtureSpec, generate_fixture
from .flowio import flow_to_color, read_flow_file, write_flow_file
from .losses import ppa_loss, total_loss
from .metrics import MetricsReport, e_measure, evaluate, f_measure, mae, s_measure
from .nets import AtfNet, SaliencyOutputs, build_model
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
