"""Optimization loop and inference.

Determinism: the frame order of epoch e and the augmentation draws of step
(e, b) come from generators keyed on (seed, e) and (seed, e, b), so a resumed
run replays exactly the batches the uninterrupted run would have seen, and
two runs with one seed produce identical loss traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .checkpoint import (Checkpoint, checkpoint_from_training, load_checkpoint,
                         load_into_model, restore_optimizer, save_checkpoint)
from .config import ModelConfig, TrainConfig
from .dataio import DatasetLayout, FrameSample, augment_sample, iter_frames, load_frame
from .errors import ConfigError, TrainingDiverged
from .flowio import flow_to_color
from .nets import build_model
from .losses import total_loss

_ORDER_TAG = 1000003
_AUGMENT_TAG = 7


@dataclass
class StepRecord:
    step: int
    epoch: int
    lr: float
    loss: float
    terms: dict

    def format(self) -> str:
        parts = [f"step={self.step}", f"epoch={self.epoch}", f"lr={self.lr:.3e}",
                 f"loss={self.loss:.6f}"]
        parts += [f"{k}={v:.6f}" for k, v in self.terms.items()]
        return " ".join(parts)


def _resize_plane(arr: np.ndarray, size: int, nearest: bool = False) -> np.ndarray:
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr
    mode = Image.NEAREST if nearest else Image.BILINEAR
    chans = []
    for c in range(arr.shape[2]):
        img = Image.fromarray(arr[..., c].astype(np.float32), mode="F")
        chans.append(np.asarray(img.resize((size, size), mode), dtype=np.float32))
    return np.stack(chans, axis=-1)


def sample_to_tensors(sample: FrameSample, config: ModelConfig, size: int | None = None,
                      dtype=torch.float32):
    """FrameSample -> (rgb, depth, flow, gt) NCHW tensors at the network size.

    Flow vectors are rescaled with the resize and rendered to a color image
    when the config expects the 3-channel flow input.
    """
    size = size or config.input_size
    h, w = sample.rgb.shape[:2]
    rgb = _resize_plane(sample.rgb, size)
    depth = _resize_plane(sample.depth, size)
    gt = _resize_plane(sample.gt, size, nearest=True)
    flow = _resize_plane(sample.flow, size)
    flow[..., 0] *= size / w
    flow[..., 1] *= size / h
    if config.flow_input == "rendered3":
        flow = flow_to_color(flow).astype(np.float32)

    def to_t(a):
        return torch.from_numpy(np.ascontiguousarray(a.transpose(2, 0, 1))).to(dtype)

    return to_t(rgb), to_t(depth), to_t(flow), to_t(gt)


def _load_batch(layout, frames, indices, config, train_cfg, epoch, step):
    rng = np.random.default_rng([train_cfg.seed, _AUGMENT_TAG, epoch, step])
    rgbs, depths, flows, gts = [], [], [], []
    for i in indices:
        video_id, idx = frames[i]
        sample = load_frame(layout, video_id, idx)
        sample = augment_sample(sample, rng, train_cfg.augment)
        r, d, f, g = sample_to_tensors(sample, config)
        rgbs.append(r)
        depths.append(d)
        flows.append(f)
        gts.append(g)
    return (torch.stack(rgbs), torch.stack(depths), torch.stack(flows), torch.stack(gts))


def train(model_config: ModelConfig, train_cfg: TrainConfig, layout: DatasetLayout,
          out_dir: str | Path, resume_from: str | Path | None = None,
          log_fn=None) -> tuple[Checkpoint, list[StepRecord]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(model_config, train_cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate)
    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        load_into_model(ckpt, model)
        restore_optimizer(ckpt, model, optimizer)
        start_epoch = ckpt.epoch

    frames = list(iter_frames(layout))
    if not frames:
        raise ConfigError("training split has no frames")
    steps_per_epoch = math.ceil(len(frames) / train_cfg.batch_size)

    records: list[StepRecord] = []
    log_path = out_dir / "train_log.txt"
    mode = "a" if resume_from is not None else "w"
    with open(log_path, mode) as log:
        global_step = start_epoch * steps_per_epoch
        for epoch in range(start_epoch, train_cfg.epochs):
            lr = train_cfg.lr_at_epoch(epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = np.random.default_rng([train_cfg.seed, _ORDER_TAG, epoch]).permutation(len(frames))
            for b in range(steps_per_epoch):
                lo = b * train_cfg.batch_size
                batch_idx = order[lo:lo + train_cfg.batch_size]
                rgb, depth, flow, gt = _load_batch(
                    layout, frames, batch_idx, model_config, train_cfg, epoch, b)
                outputs = model(rgb, depth, flow)
                loss, terms = total_loss(outputs, gt, train_cfg.loss)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at step {global_step} (epoch {epoch}): "
                        + " ".join(f"{k}={float(v):g}" for k, v in terms.items())
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                global_step += 1
                rec = StepRecord(step=global_step, epoch=epoch, lr=lr,
                                 loss=float(loss.detach()),
                                 terms={k: float(v.detach()) for k, v in terms.items()})
                records.append(rec)
                log.write(rec.format() + "\n")
                if log_fn is not None:
                    log_fn(rec)
            if (epoch + 1) % train_cfg.checkpoint_every_epochs == 0 and epoch + 1 < train_cfg.epochs:
                ckpt = checkpoint_from_training(model, optimizer, epoch + 1, train_cfg.seed)
                save_checkpoint(ckpt, out_dir / f"checkpoint_ep{epoch + 1:03d}.bin")

    final = checkpoint_from_training(model, optimizer, train_cfg.epochs, train_cfg.seed)
    save_checkpoint(final, out_dir / "checkpoint_final.bin")
    return final, records


def infer(ckpt: Checkpoint | str | Path, layout: DatasetLayout, out_dir: str | Path,
          branch_maps: bool = False, eval_size: int | None = None) -> list[Path]:
    """Write the fused saliency map per frame as 8-bit PNG at the frame's
    original resolution; per-branch maps go to sibling folders on request."""
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    config = ckpt.config
    if eval_size is not None and eval_size % 32:
        raise ConfigError("evaluation size must be divisible by 32")
    model = build_model(config, ckpt.seed)
    load_into_model(ckpt, model)
    model.eval()
    out_dir = Path(out_dir)
    written = []
    with torch.no_grad():
        for video_id, index in iter_frames(layout):
            sample = load_frame(layout, video_id, index)
            orig_h, orig_w = sample.rgb.shape[:2]
            rgb, depth, flow, _ = sample_to_tensors(sample, config, size=eval_size)
            outputs = model(rgb[None], depth[None], flow[None])
            named = {"fused": outputs.s_f}
            if branch_maps:
                named.update({k: v for k, v in outputs.branch_items() if k != "fused"})
            for name, prob in named.items():
                arr = prob[0, 0].numpy()
                if arr.shape != (orig_h, orig_w):
                    plane = Image.fromarray(arr.astype(np.float32), mode="F")
                    arr = np.asarray(plane.resize((orig_w, orig_h), Image.BILINEAR))
                img = Image.fromarray((np.clip(arr, 0, 1) * 255).round().astype(np.uint8))
                sub = out_dir if name == "fused" else out_dir / f"branch_{name}"
                path = sub / video_id / f"{index:05d}.png"
                path.parent.mkdir(parents=True, exist_ok=True)
                img.save(path)
                if name == "fused":
                    written.append(path)
    return written
