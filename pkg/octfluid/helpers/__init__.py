"""Helper modules and utilities for the octfluid library."""

from octfluid.helpers.config import (
    ModelConfig,
    TrainConfig,
    parse_config_text,
    read_config_file,
    write_config_file,
)
from octfluid.helpers.errors import (
    AxisError,
    ChecksumError,
    ClassError,
    ConfigError,
    CoverageError,
    FormatError,
    NumericalError,
    OptimizerError,
    ShapeError,
    UnsupportedConfig,
)
from octfluid.helpers.planner import CropInterval, CropPlan, load_manifest, plan_inference_crops, write_manifest
from octfluid.helpers.image_utils import ImageCanvas, render_preview
from octfluid.helpers.random_seed import make_rng, set_seed
from octfluid.helpers.summary_writer import SummaryWriter
from octfluid.helpers.constants import (
    CLASS_COLOUR_MAP,
    CLASS_NAMES,
    FOREGROUND_CLASSES,
    MODEL_DEFAULTS,
    PIPELINE_DEFAULTS,
    SYNTH_DEFAULTS,
    TRAIN_DEFAULTS,
)

__all__ = [
    # Configuration
    "ModelConfig",
    "TrainConfig",
    "parse_config_text",
    "read_config_file",
    "write_config_file",
    # Errors
    "AxisError",
    "ChecksumError",
    "ClassError",
    "ConfigError",
    "CoverageError",
    "FormatError",
    "NumericalError",
    "OptimizerError",
    "ShapeError",
    "UnsupportedConfig",
    # Planning
    "CropInterval",
    "CropPlan",
    "load_manifest",
    "plan_inference_crops",
    "write_manifest",
    # Utilities
    "ImageCanvas",
    "render_preview",
    "make_rng",
    "set_seed",
    "SummaryWriter",
    # Constants
    "CLASS_COLOUR_MAP",
    "CLASS_NAMES",
    "FOREGROUND_CLASSES",
    "MODEL_DEFAULTS",
    "PIPELINE_DEFAULTS",
    "SYNTH_DEFAULTS",
    "TRAIN_DEFAULTS",
]
