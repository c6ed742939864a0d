"""Network building blocks, the segmentation model and its checkpoint format."""

from octfluid.network.windowing import (
    TokenGrid,
    WindowSpec,
    WindowAttention,
    build_attention_mask,
    build_shift_mask,
    patch_merging,
    patch_partition,
    window_partition,
    window_reverse,
)
from octfluid.network.swin_block import MlpBlock, MrfBlock, SwinBlockPair, SwinSubBlock
from octfluid.network.va_block import ResidualConvBlock, VolumetricAttention
from octfluid.network.model import FeaturePyramid, FluidSegmenter, build_model
from octfluid.network.checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint

__all__ = [
    "TokenGrid",
    "WindowSpec",
    "WindowAttention",
    "build_attention_mask",
    "build_shift_mask",
    "patch_merging",
    "patch_partition",
    "window_partition",
    "window_reverse",
    "MlpBlock",
    "MrfBlock",
    "SwinBlockPair",
    "SwinSubBlock",
    "ResidualConvBlock",
    "VolumetricAttention",
    "FeaturePyramid",
    "FluidSegmenter",
    "build_model",
    "checkpoint_hash",
    "load_checkpoint",
    "save_checkpoint",
]
