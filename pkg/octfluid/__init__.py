"""octfluid: 3D shifted-window transformer for retinal fluid segmentation in OCT volumes."""

__version__ = "0.1.0"

# Import main classes for convenient access
from octfluid.network.model import FluidSegmenter, build_model
from octfluid.network.checkpoint import load_checkpoint, save_checkpoint
from octfluid.generators.synthetic_oct import SyntheticOCTGenerator, generate_synthetic
from octfluid.pipeline.volume import LabelVolume, Volume, read_volume, write_volume
from octfluid.training.trainer import Trainer, evaluate, predict, train

# Import configuration and errors
from octfluid.helpers.config import ModelConfig, TrainConfig, read_config_file
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.helpers.constants import CLASS_NAMES, MODEL_DEFAULTS, TRAIN_DEFAULTS

__all__ = [
    "__version__",
    # Model
    "FluidSegmenter",
    "build_model",
    "load_checkpoint",
    "save_checkpoint",
    # Data
    "SyntheticOCTGenerator",
    "generate_synthetic",
    "LabelVolume",
    "Volume",
    "read_volume",
    "write_volume",
    # Training
    "Trainer",
    "evaluate",
    "predict",
    "train",
    # Configuration
    "ModelConfig",
    "TrainConfig",
    "read_config_file",
    "ConfigError",
    "ShapeError",
    "CLASS_NAMES",
    "MODEL_DEFAULTS",
    "TRAIN_DEFAULTS",
]
