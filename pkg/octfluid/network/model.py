"""
Volumetric fluid-segmentation network.

The encoder tokenises the volume into 2x2x2 patches and runs a ladder of
shifted-window stages (``C, 2C, 4C`` at ``/2, /4, /8``) followed by patch
merging, ending in an ``8C`` bottleneck at ``/16``. The decoder mirrors it:
each level doubles resolution with a transposed convolution, concatenates the
matching skip feature passed through a volumetric-attention block, and fuses
the pair with a residual convolution block. A last doubling step joins a
residual block on the raw input, and a 1x1x1 head plus softmax yields class
probabilities at input resolution.
"""

import logging
from dataclasses import dataclass
from typing import List

from octfluid.autodiff import functional as F
from octfluid.autodiff.layers import Conv3d, ConvTranspose3d
from octfluid.autodiff.module import Module
from octfluid.autodiff.tensor import Tensor, concat
from octfluid.helpers.config import ModelConfig
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.network.swin_block import SwinBlockPair
from octfluid.network.va_block import ResidualConvBlock, VolumetricAttention
from octfluid.network.windowing import PatchEmbed, PatchMerging

logger = logging.getLogger(__name__)


@dataclass
class FeaturePyramid:
    """Encoder outputs in ``[N, C, d, h, w]`` layout.

    Attributes:
        raw: the network input (``/1``)
        skips: stage outputs at ``/2, /4, /8`` with ``C, 2C, 4C`` channels
        bottleneck: ``/16`` features with ``8C`` channels
    """

    raw: Tensor
    skips: List[Tensor]
    bottleneck: Tensor

    def shapes(self):
        return [tuple(s.shape) for s in self.skips] + [tuple(self.bottleneck.shape)]


class Encoder(Module):
    def __init__(self, cfg: ModelConfig):
        block_args = dict(
            depth=cfg.blocks_per_stage,
            use_mrf=cfg.use_mrf,
            mrf_mode=cfg.mrf_mode,
            mlp_ratio=cfg.mlp_ratio,
            rel_pos_bias=cfg.rel_pos_bias,
            std=cfg.init_std,
        )
        self.patch_embed = PatchEmbed(cfg.in_channels, cfg.patch_size, cfg.embed_dim, cfg.patch_norm, cfg.init_std)
        for level in range(cfg.stages):
            dim = cfg.stage_dim(level)
            setattr(self, f"stage{level + 1}", SwinBlockPair(dim, cfg.num_heads[level], cfg.window_size, **block_args))
            setattr(self, f"merge{level + 1}", PatchMerging(dim, cfg.init_std))
        self.bottleneck = SwinBlockPair(
            cfg.stage_dim(cfg.stages), cfg.num_heads[cfg.stages], cfg.window_size, **block_args
        )
        self._cfg = cfg

    def forward(self, volume: Tensor) -> FeaturePyramid:
        cfg = self._cfg
        if volume.ndim != 5 or volume.shape[1] != cfg.in_channels:
            raise ShapeError(f"expected [N,{cfg.in_channels},D,H,W] input, got {volume.shape}")
        spatial = volume.shape[2:]
        if any(size % cfg.downsample for size in spatial):
            raise ShapeError(f"input dims {spatial} must be divisible by {cfg.downsample}")
        grid = self.patch_embed(volume)
        skips = []
        for level in range(cfg.stages):
            grid = getattr(self, f"stage{level + 1}")(grid)
            skips.append(grid.to_volume())
            grid = getattr(self, f"merge{level + 1}")(grid)
        grid = self.bottleneck(grid)
        return FeaturePyramid(raw=volume, skips=skips, bottleneck=grid.to_volume())


class Decoder(Module):
    def __init__(self, cfg: ModelConfig):
        top = cfg.stage_dim(cfg.stages)
        self.bottleneck_block = ResidualConvBlock(top, top)
        for level in reversed(range(cfg.stages)):
            dim = cfg.stage_dim(level)
            setattr(self, f"up{level + 1}", ConvTranspose3d(2 * dim, dim))
            skip = VolumetricAttention(dim) if cfg.use_va else ResidualConvBlock(dim, dim)
            setattr(self, f"skip{level + 1}", skip)
            setattr(self, f"fuse{level + 1}", ResidualConvBlock(2 * dim, dim))
        stem = cfg.embed_dim // 2
        self.up0 = ConvTranspose3d(cfg.embed_dim, stem)
        if cfg.full_res_skip:
            self.raw_skip = ResidualConvBlock(cfg.in_channels, stem)
            self.fuse0 = ResidualConvBlock(2 * stem, stem)
        else:
            self.raw_skip = None
            self.fuse0 = ResidualConvBlock(stem, stem)
        self.head = Conv3d(stem, cfg.num_classes, kernel_size=1)
        self._cfg = cfg

    def check_pyramid(self, pyramid: FeaturePyramid) -> None:
        cfg = self._cfg
        if len(pyramid.skips) != cfg.stages:
            raise ConfigError(f"pyramid has {len(pyramid.skips)} skips, config expects {cfg.stages}")
        for level, skip in enumerate(pyramid.skips):
            if skip.shape[1] != cfg.stage_dim(level):
                raise ConfigError(
                    f"skip {level} has {skip.shape[1]} channels, config expects {cfg.stage_dim(level)}"
                )
        if pyramid.bottleneck.shape[1] != cfg.stage_dim(cfg.stages):
            raise ConfigError(
                f"bottleneck has {pyramid.bottleneck.shape[1]} channels, "
                f"config expects {cfg.stage_dim(cfg.stages)}"
            )

    def logits(self, pyramid: FeaturePyramid) -> Tensor:
        self.check_pyramid(pyramid)
        x = self.bottleneck_block(pyramid.bottleneck)
        for level in reversed(range(self._cfg.stages)):
            x = getattr(self, f"up{level + 1}")(x)
            skip = getattr(self, f"skip{level + 1}")(pyramid.skips[level])
            x = getattr(self, f"fuse{level + 1}")(concat([x, skip], axis=1))
        x = self.up0(x)
        if self.raw_skip is not None:
            x = concat([x, self.raw_skip(pyramid.raw)], axis=1)
        x = self.fuse0(x)
        return self.head(x)

    def forward(self, pyramid: FeaturePyramid) -> Tensor:
        return F.softmax(self.logits(pyramid), axis=1)


class FluidSegmenter(Module):
    """Encoder + decoder; ``forward`` maps ``[N,1,D,H,W]`` to class probabilities."""

    def __init__(self, cfg: ModelConfig, initialize: bool = True):
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        self._cfg = cfg
        if initialize:
            self.initialize(cfg.seed)

    @property
    def config(self) -> ModelConfig:
        return self._cfg

    def encode(self, volume: Tensor) -> FeaturePyramid:
        return self.encoder(volume)

    def decode(self, pyramid: FeaturePyramid) -> Tensor:
        return self.decoder(pyramid)

    def logits(self, volume: Tensor) -> Tensor:
        """Pre-softmax class scores."""
        return self.decoder.logits(self.encode(volume))

    def forward(self, volume: Tensor) -> Tensor:
        return self.decode(self.encode(volume))


def encode(volume: Tensor, model: FluidSegmenter) -> FeaturePyramid:
    return model.encode(volume)


def decode(pyramid: FeaturePyramid, model: FluidSegmenter) -> Tensor:
    return model.decode(pyramid)


def build_model(cfg: ModelConfig) -> FluidSegmenter:
    model = FluidSegmenter(cfg)
    logger.info(
        "Built model: C=%d, window=%s, heads=%s, va=%s, mrf=%s, %d parameters",
        cfg.embed_dim, cfg.window_size, cfg.num_heads, cfg.use_va, cfg.use_mrf, model.parameter_count(),
    )
    return model
