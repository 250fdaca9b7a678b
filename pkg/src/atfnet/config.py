"""Model, loss, and training configuration with strict key-value schemas.

Config files are JSON objects. Unknown keys, wrong types, and out-of-range
values are rejected with the offending key named, so typos never silently
fall back to defaults. CLI ``--set key=value`` overrides beat file values,
which beat the defaults below.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

FLOW_INPUTS = ("rendered3", "raw2")
NORM_MODES = ("group", "batch", "none")
BACKBONES = ("tiny",)


@dataclass
class ModelConfig:
    encoder_channels: tuple[int, ...] = (16, 32, 64, 128, 256)
    c_dec: int = 64
    c_fuse: int = 64
    input_size: int = 352
    flow_input: str = "rendered3"
    use_depth_branch: bool = True
    use_flow_branch: bool = True
    use_mea: bool = True
    use_mda: bool = True
    use_attention_blocks: bool = True
    backbone: str = "tiny"
    normalization: str = "group"

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        if len(self.encoder_channels) != 5:
            raise ConfigError("encoder_channels must list exactly 5 stage widths")
        if any(c <= 0 for c in self.encoder_channels):
            raise ConfigError("encoder_channels must be positive")
        if any(c % 2 for c in self.encoder_channels):
            raise ConfigError("encoder_channels must be even (fusion halves them)")
        if self.c_dec <= 0 or self.c_fuse <= 0:
            raise ConfigError("c_dec and c_fuse must be positive")
        if self.input_size % 32:
            raise ConfigError("input_size must be divisible by 32")
        if self.flow_input not in FLOW_INPUTS:
            raise ConfigError(f"flow_input must be one of {FLOW_INPUTS}")
        if self.backbone not in BACKBONES:
            raise ConfigError(
                f"backbone must be one of {BACKBONES}; pretrained backbones are not bundled"
            )
        if self.normalization not in NORM_MODES:
            raise ConfigError(f"normalization must be one of {NORM_MODES}")

    @property
    def flow_channels(self) -> int:
        return 3 if self.flow_input == "rendered3" else 2


@dataclass
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    weight_gain: float = 5.0
    weight_window: int = 31
    smoothing: float = 1.0
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss lambdas must be nonnegative")
        if self.weight_window % 2 == 0 or self.weight_window < 1:
            raise ConfigError("weight_window must be odd and positive")
        if not 0 < self.clamp_eps < 0.5:
            raise ConfigError("clamp_eps must lie in (0, 0.5)")


@dataclass
class AugmentPolicy:
    rotate90: bool = True
    hflip: bool = True
    pepper: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.pepper <= 1.0:
            raise ConfigError("pepper rate must lie in [0, 1]")

    @classmethod
    def none(cls) -> "AugmentPolicy":
        return cls(rotate90=False, hflip=False, pepper=0.0)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    decay_every_epochs: int = 20
    decay_factor: float = 0.1
    epochs: int = 50
    batch_size: int = 4
    seed: int = 0
    checkpoint_every_epochs: int = 10
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.decay_every_epochs < 1:
            raise ConfigError("decay_every_epochs must be >= 1")

    def lr_at_epoch(self, epoch: int) -> float:
        """Stepwise schedule: the base rate divided by 10 every 20 epochs."""
        return self.learning_rate * self.decay_factor ** (epoch // self.decay_every_epochs)


def _flatten_fields(cls) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cls):
        out[f.name] = f
    return out


def _coerce(key: str, value: Any, target_type) -> Any:
    if target_type is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"key '{key}': expected a boolean, got {value!r}")
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ConfigError(f"key '{key}': expected an integer, got {value!r}")
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"key '{key}': expected an integer, got {value!r}") from None
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"key '{key}': expected a number, got {value!r}")
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"key '{key}': expected a number, got {value!r}") from None
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"key '{key}': expected a string, got {value!r}")
        return value
    return value


def _build_dataclass(cls, data: dict, prefix: str = ""):
    fields = _flatten_fields(cls)
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key '{prefix}{key}'")
        f = fields[key]
        if f.name == "encoder_channels":
            if not isinstance(value, (list, tuple)):
                raise ConfigError("key 'encoder_channels': expected a list of 5 integers")
            kwargs[key] = tuple(_coerce(f"encoder_channels[{i}]", v, int) for i, v in enumerate(value))
        elif f.name == "augment":
            if not isinstance(value, dict):
                raise ConfigError("key 'augment': expected an object")
            kwargs[key] = _build_dataclass(AugmentPolicy, value, prefix="augment.")
        elif f.name == "loss":
            if not isinstance(value, dict):
                raise ConfigError("key 'loss': expected an object")
            kwargs[key] = _build_dataclass(LossConfig, value, prefix="loss.")
        elif f.type in ("int", int):
            kwargs[key] = _coerce(prefix + key, value, int)
        elif f.type in ("float", float):
            kwargs[key] = _coerce(prefix + key, value, float)
        elif f.type in ("bool", bool):
            kwargs[key] = _coerce(prefix + key, value, bool)
        elif f.type in ("str", str):
            kwargs[key] = _coerce(prefix + key, value, str)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def model_config_from_dict(data: dict) -> ModelConfig:
    if not isinstance(data, dict):
        raise ConfigError("model config must be a JSON object")
    return _build_dataclass(ModelConfig, data)


def train_config_from_dict(data: dict) -> TrainConfig:
    if not isinstance(data, dict):
        raise ConfigError("train config must be a JSON object")
    return _build_dataclass(TrainConfig, data)


def load_model_config(path: str | Path) -> ModelConfig:
    return model_config_from_dict(_read_json(path))


def load_train_config(path: str | Path) -> TrainConfig:
    return train_config_from_dict(_read_json(path))


def _read_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def config_digest(cfg) -> str:
    """Stable hex digest of a config, used by checkpoints and manifests."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` strings (dots reach nested objects) onto a config dict."""
    out = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{key}' traverses a non-object value")
        node[parts[-1]] = value
    return out
