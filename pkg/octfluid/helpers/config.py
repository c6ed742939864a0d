"""
Model and training configuration objects and the flat ``key = value`` file format.

Example file::

    # desk-scale run
    embed_dim = 24
    window_size = 4,4,4
    lr = 1e-4
    epochs = 300
"""

import logging
from dataclasses import dataclass, fields, asdict, replace
from pathlib import Path
from typing import Any, Dict, Tuple, Union

from octfluid.helpers.constants import MODEL_DEFAULTS, TRAIN_DEFAULTS, PIPELINE_DEFAULTS
from octfluid.helpers.errors import ConfigError

logger = logging.getLogger(__name__)


# =============================================================================
# Value parsing
# =============================================================================


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def _parse_value(key: str, raw: str, default: Any) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            item_type = type(default[0]) if default else int
            return tuple(item_type(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"Invalid value for '{key}': {raw!r}")
    return raw


# =============================================================================
# Config objects
# =============================================================================


@dataclass(frozen=True)
class ModelConfig:
    """Architectural hyper-parameters of the segmentation network."""

    in_channels: int = MODEL_DEFAULTS["in_channels"]
    num_classes: int = MODEL_DEFAULTS["num_classes"]
    embed_dim: int = MODEL_DEFAULTS["embed_dim"]
    patch_size: int = MODEL_DEFAULTS["patch_size"]
    stages: int = MODEL_DEFAULTS["stages"]
    blocks_per_stage: int = MODEL_DEFAULTS["blocks_per_stage"]
    num_heads: Tuple[int, ...] = MODEL_DEFAULTS["num_heads"]
    window_size: Tuple[int, ...] = MODEL_DEFAULTS["window_size"]
    mlp_ratio: float = MODEL_DEFAULTS["mlp_ratio"]
    use_va: bool = MODEL_DEFAULTS["use_va"]
    use_mrf: bool = MODEL_DEFAULTS["use_mrf"]
    mrf_mode: str = MODEL_DEFAULTS["mrf_mode"]
    rel_pos_bias: bool = MODEL_DEFAULTS["rel_pos_bias"]
    patch_norm: bool = MODEL_DEFAULTS["patch_norm"]
    full_res_skip: bool = MODEL_DEFAULTS["full_res_skip"]
    init_std: float = MODEL_DEFAULTS["init_std"]
    seed: int = MODEL_DEFAULTS["seed"]

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ConfigError(f"embed_dim must be a positive even number, got {self.embed_dim}")
        if self.patch_size != 2 or self.stages < 1:
            raise ConfigError(
                f"patch_size must be 2 (the decoder restores resolution by doubling) and stages >= 1, "
                f"got patch_size={self.patch_size}, stages={self.stages}"
            )
        if self.blocks_per_stage < 2 or self.blocks_per_stage % 2:
            raise ConfigError(
                f"blocks_per_stage must be an even number >= 2 (W-MSA/SW-MSA pairs), "
                f"got {self.blocks_per_stage}"
            )
        if len(self.num_heads) != self.stages + 1:
            raise ConfigError(
                f"num_heads needs {self.stages + 1} entries (stages + bottleneck), "
                f"got {self.num_heads}"
            )
        for level, heads in enumerate(self.num_heads):
            dim = self.stage_dim(level)
            if heads < 1 or dim % heads:
                raise ConfigError(f"stage {level}: {dim} channels not divisible by {heads} heads")
        if len(self.window_size) != 3 or min(self.window_size) < 1:
            raise ConfigError(f"window_size must be three positive ints, got {self.window_size}")
        if self.mrf_mode not in ("1d", "3d"):
            raise ConfigError(f"mrf_mode must be '1d' or '3d', got {self.mrf_mode!r}")
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")

    @property
    def downsample(self) -> int:
        """Total spatial reduction between input and bottleneck."""
        return self.patch_size * 2 ** self.stages

    def stage_dim(self, level: int) -> int:
        return self.embed_dim * 2 ** level

    @property
    def shift_size(self) -> Tuple[int, int, int]:
        return tuple(w // 2 for w in self.window_size)

    def to_text(self) -> str:
        """Canonical ``key=value`` block (sorted keys, one per line)."""
        items = sorted(asdict(self).items())
        return "".join(f"{key}={_format_value(value)}\n" for key, value in items)

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, raw = line.partition("=")
            values[key.strip()] = raw
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ModelConfig":
        return _build(cls, values)

    def with_overrides(self, **overrides) -> "ModelConfig":
        return replace(self, **overrides)


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation, sampling and checkpointing settings."""

    lr: float = TRAIN_DEFAULTS["lr"]
    beta1: float = TRAIN_DEFAULTS["beta1"]
    beta2: float = TRAIN_DEFAULTS["beta2"]
    eps_adam: float = TRAIN_DEFAULTS["eps_adam"]
    epochs: int = TRAIN_DEFAULTS["epochs"]
    batch_size: int = TRAIN_DEFAULTS["batch_size"]
    seed: int = TRAIN_DEFAULTS["seed"]
    crop_depth: int = TRAIN_DEFAULTS["crop_depth"]
    overlap: float = PIPELINE_DEFAULTS["overlap"]
    checkpoint_every: int = TRAIN_DEFAULTS["checkpoint_every"]
    augment: bool = TRAIN_DEFAULTS["augment"]
    shift_prob: float = TRAIN_DEFAULTS["shift_prob"]
    max_shift: float = TRAIN_DEFAULTS["max_shift"]
    weight_decay: float = TRAIN_DEFAULTS["weight_decay"]
    grad_clip: float = TRAIN_DEFAULTS["grad_clip"]
    lr_schedule: str = TRAIN_DEFAULTS["lr_schedule"]
    dice_eps: float = TRAIN_DEFAULTS["dice_eps"]

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.crop_depth < 1:
            raise ConfigError(f"crop_depth must be >= 1, got {self.crop_depth}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.eps_adam <= 0 or self.dice_eps <= 0:
            raise ConfigError("eps_adam and dice_eps must be positive")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError(f"overlap must lie in [0, 1), got {self.overlap}")
        if not 0.0 <= self.shift_prob <= 1.0:
            raise ConfigError(f"shift_prob must lie in [0, 1], got {self.shift_prob}")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.weight_decay < 0 or self.grad_clip < 0:
            raise ConfigError("weight_decay and grad_clip must be >= 0")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")

    def to_text(self) -> str:
        items = sorted(asdict(self).items())
        return "".join(f"{key}={_format_value(value)}\n" for key, value in items)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        return _build(cls, values)

    def with_overrides(self, **overrides) -> "TrainConfig":
        return replace(self, **overrides)


def _build(cls, values: Dict[str, Any]):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"Unknown {cls.__name__} key: '{key}'")
        default = known[key].default
        if isinstance(raw, str):
            kwargs[key] = _parse_value(key, raw, default)
        elif isinstance(raw, list):
            kwargs[key] = tuple(raw)
        else:
            kwargs[key] = raw
    return cls(**kwargs)


# =============================================================================
# Config files
# =============================================================================

MODEL_KEYS = frozenset(f.name for f in fields(ModelConfig))
TRAIN_KEYS = frozenset(f.name for f in fields(TrainConfig))


def parse_config_text(text: str, source: str = "<config>") -> Tuple[ModelConfig, TrainConfig]:
    """Split a flat ``key = value`` document into model and training configs.

    ``seed`` feeds both configs. Unknown keys raise ``ConfigError``.
    """
    model_values: Dict[str, str] = {}
    train_values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        matched = False
        if key in MODEL_KEYS:
            model_values[key] = raw
            matched = True
        if key in TRAIN_KEYS:
            train_values[key] = raw
            matched = True
        if not matched:
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
    return ModelConfig.from_dict(model_values), TrainConfig.from_dict(train_values)


def read_config_file(path: Union[str, Path]) -> Tuple[ModelConfig, TrainConfig]:
    """Load a config file; a missing path raises ``FileNotFoundError``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    logger.debug("Reading config %s", path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def write_config_file(path: Union[str, Path], model: ModelConfig, train: TrainConfig) -> None:
    """Write both configs as one documented-order file (model keys first)."""
    lines = ["# model"]
    lines += [line for line in model.to_text().splitlines() if not line.startswith("seed=")]
    lines.append("# training")
    lines += train.to_text().splitlines()
    Path(path).write_text("\n".join(line.replace("=", " = ", 1) for line in lines) + "\n", encoding="utf-8")
