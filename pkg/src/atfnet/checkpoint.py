"""Versioned binary checkpoints with a named tensor table.

Byte layout (little-endian throughout):

    offset 0   8 bytes   magic b"ATFCKPT\\0"
    offset 8   uint32    header length H in bytes
    offset 12  H bytes   UTF-8 JSON header
    offset 12+H          raw tensor payload

The JSON header holds ``format_version`` (semver; a major-version change
breaks compatibility), the model config echo and its digest, the epoch
counter, the training seed, optional Adam bookkeeping (per-parameter step
counts and the param-group hyperparameters), and ``tensors``: a list of
``{name, dtype, shape, offset, nbytes}`` rows whose offsets index into the
payload. Model weights are stored under ``model/<state_dict key>``; Adam
moments under ``optim/<state_dict key>/exp_avg`` and ``.../exp_avg_sq``.
Tensors round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .config import ModelConfig, config_digest, config_to_dict, model_config_from_dict
from .errors import ConfigError, Corrupt, VersionMismatch

MAGIC = b"ATFCKPT\0"
FORMAT_VERSION = "1.0.0"

_DTYPES = {
    "float32": (np.dtype("<f4"), torch.float32),
    "float64": (np.dtype("<f8"), torch.float64),
    "int64": (np.dtype("<i8"), torch.int64),
}


@dataclass
class Checkpoint:
    config: ModelConfig
    model_state: dict
    epoch: int
    seed: int
    optimizer_state: Optional[dict] = None   # {"steps": {name: int}, "hyper": {...}, moments in tensors}
    optimizer_tensors: Optional[dict] = None  # {name: {"exp_avg": T, "exp_avg_sq": T}}
    version: str = FORMAT_VERSION


def _tensor_bytes(t: torch.Tensor) -> tuple[str, bytes]:
    for name, (np_dt, torch_dt) in _DTYPES.items():
        if t.dtype == torch_dt:
            return name, np.ascontiguousarray(t.detach().cpu().numpy()).astype(np_dt, copy=False).tobytes()
    raise ConfigError(f"unsupported tensor dtype {t.dtype}")


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    table = []
    blobs = []
    offset = 0

    def add(name, tensor):
        nonlocal offset
        dtype, raw = _tensor_bytes(tensor)
        table.append({
            "name": name, "dtype": dtype, "shape": list(tensor.shape),
            "offset": offset, "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)

    for key in sorted(ckpt.model_state):
        add(f"model/{key}", ckpt.model_state[key])
    if ckpt.optimizer_tensors:
        for key in sorted(ckpt.optimizer_tensors):
            add(f"optim/{key}/exp_avg", ckpt.optimizer_tensors[key]["exp_avg"])
            add(f"optim/{key}/exp_avg_sq", ckpt.optimizer_tensors[key]["exp_avg_sq"])

    header = {
        "format_version": ckpt.version,
        "config": config_to_dict(ckpt.config),
        "config_digest": config_digest(ckpt.config),
        "epoch": int(ckpt.epoch),
        "seed": int(ckpt.seed),
        "optimizer": ckpt.optimizer_state,
        "tensors": table,
    }
    head = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array([len(head)], dtype="<u4").tobytes())
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise Corrupt(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise Corrupt(f"{path}: not a checkpoint file (bad magic)")
    head_len = int(np.frombuffer(raw, dtype="<u4", count=1, offset=8)[0])
    if len(raw) < 12 + head_len:
        raise Corrupt(f"{path}: truncated header")
    try:
        header = json.loads(raw[12:12 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise Corrupt(f"{path}: unreadable header: {exc}") from exc

    version = header.get("format_version", "")
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise VersionMismatch(f"{path}: format {version!r}, this build reads {FORMAT_VERSION}")

    payload = raw[12 + head_len:]
    tensors = {}
    for row in header["tensors"]:
        np_dt, torch_dt = _DTYPES[row["dtype"]]
        end = row["offset"] + row["nbytes"]
        if end > len(payload):
            raise Corrupt(f"{path}: tensor {row['name']} extends past end of file")
        arr = np.frombuffer(payload, dtype=np_dt, count=row["nbytes"] // np_dt.itemsize,
                            offset=row["offset"]).reshape(row["shape"])
        tensors[row["name"]] = torch.from_numpy(arr.copy()).to(torch_dt)

    model_state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    optim_tensors = {}
    for k, v in tensors.items():
        if k.startswith("optim/"):
            key = k[len("optim/"):k.rfind("/")]
            kind = k[k.rfind("/") + 1:]
            optim_tensors.setdefault(key, {})[kind] = v

    return Checkpoint(
        config=model_config_from_dict(header["config"]),
        model_state=model_state,
        epoch=header["epoch"],
        seed=header["seed"],
        optimizer_state=header.get("optimizer"),
        optimizer_tensors=optim_tensors or None,
        version=version,
    )


def checkpoint_from_training(model, optimizer, epoch: int, seed: int) -> Checkpoint:
    """Capture model weights plus Adam moments, keyed by state-dict names."""
    names = [n for n, _ in model.named_parameters()]
    params = list(model.parameters())
    steps = {}
    moments = {}
    hyper = None
    if optimizer is not None:
        group = optimizer.param_groups[0]
        hyper = {"lr": group["lr"], "betas": list(group["betas"]), "eps": group["eps"],
                 "weight_decay": group["weight_decay"]}
        for name, p in zip(names, params):
            state = optimizer.state.get(p)
            if state:
                step = state["step"]
                steps[name] = int(step.item() if torch.is_tensor(step) else step)
                moments[name] = {"exp_avg": state["exp_avg"].clone(),
                                 "exp_avg_sq": state["exp_avg_sq"].clone()}
    return Checkpoint(
        config=model.config,
        model_state={k: v.clone() for k, v in model.state_dict().items()},
        epoch=epoch,
        seed=seed,
        optimizer_state={"steps": steps, "hyper": hyper} if hyper is not None else None,
        optimizer_tensors=moments or None,
    )


def load_into_model(ckpt: Checkpoint, model) -> None:
    if config_digest(model.config) != config_digest(ckpt.config):
        raise ConfigError("checkpoint was written with a different model config")
    model.load_state_dict(ckpt.model_state)


def restore_optimizer(ckpt: Checkpoint, model, optimizer) -> None:
    """Rebuild Adam moments; steps and hyperparameters come from the header."""
    if not ckpt.optimizer_state:
        return
    steps = ckpt.optimizer_state["steps"]
    for name, p in model.named_parameters():
        if name in steps:
            optimizer.state[p] = {
                "step": torch.tensor(float(steps[name])),
                "exp_avg": ckpt.optimizer_tensors[name]["exp_avg"].clone().to(p.dtype),
                "exp_avg_sq": ckpt.optimizer_tensors[name]["exp_avg_sq"].clone().to(p.dtype),
            }
