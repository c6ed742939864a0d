"""
Shifted-window transformer blocks with the multi-receptive-field mixer.

One sub-block computes::

    x = x + W-MSA(LN(x))
    x = x + MRF(LN(x))

and a ``SwinBlockPair`` chains an unshifted sub-block with its half-window
shifted twin.
"""

import logging
from typing import Tuple

from octfluid.autodiff import functional as F
from octfluid.autodiff.layers import Conv3d, LayerNorm, Linear
from octfluid.autodiff.module import Module
from octfluid.autodiff.tensor import Tensor, reshape, transpose
from octfluid.helpers.constants import MODEL_DEFAULTS
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.network.windowing import (
    TokenGrid,
    WindowAttention,
    WindowSpec,
    cached_attention_mask,
    window_partition,
    window_reverse,
)

logger = logging.getLogger(__name__)


class MrfBlock(Module):
    """Multi-receptive-field mixer replacing the transformer MLP.

    ``x1 = gelu(conv1(x))``, ``x2 = gelu(depthwise(x1))``,
    ``x3 = gelu(dilated(x))``, ``out = gelu(fuse(x1 + x2 + x3))``.

    In ``"1d"`` mode the convolutions run along the flattened token sequence;
    in ``"3d"`` mode the dilated branch sees the spatial token layout.
    """

    def __init__(self, channels: int, mode: str = MODEL_DEFAULTS["mrf_mode"]):
        if mode not in ("1d", "3d"):
            raise ConfigError(f"unknown MRF mode {mode!r}")
        self.conv1 = Conv3d(channels, channels, kernel_size=1)
        self.depthwise = Conv3d(channels, channels, kernel_size=1, groups=channels)
        if mode == "1d":
            self.dilated = Conv3d(channels, channels, kernel_size=(3, 1, 1), padding=(2, 0, 0), dilation=(2, 1, 1))
        else:
            self.dilated = Conv3d(channels, channels, kernel_size=3, padding=2, dilation=2)
        self.fuse = Conv3d(channels, channels, kernel_size=1)
        self._channels = channels
        self._mode = mode

    def _to_layout(self, grid: TokenGrid) -> Tensor:
        if self._mode == "3d":
            return grid.to_volume()
        n, length, c = grid.tokens.shape
        return reshape(transpose(grid.tokens, (0, 2, 1)), (n, c, length, 1, 1))

    def _from_layout(self, x: Tensor, grid: TokenGrid) -> TokenGrid:
        if self._mode == "3d":
            return TokenGrid.from_volume(x)
        n, c = x.shape[:2]
        return grid.with_tokens(transpose(reshape(x, (n, c, -1)), (0, 2, 1)))

    def forward(self, grid: TokenGrid) -> TokenGrid:
        if grid.channels != self._channels:
            raise ShapeError(f"MRF block built for {self._channels} channels, got {grid.channels}")
        x = self._to_layout(grid)
        x1 = F.gelu(self.conv1(x))
        x2 = F.gelu(self.depthwise(x1))
        x3 = F.gelu(self.dilated(x))
        out = F.gelu(self.fuse(x1 + x2 + x3))
        return self._from_layout(out, grid)


def mrf_forward(grid: TokenGrid, block: MrfBlock) -> TokenGrid:
    return block(grid)


class MlpBlock(Module):
    """Two-layer GELU MLP (the mixer the MRF block replaces)."""

    def __init__(self, channels: int, ratio: float = MODEL_DEFAULTS["mlp_ratio"], std: float = MODEL_DEFAULTS["init_std"]):
        hidden = int(channels * ratio)
        self.fc1 = Linear(channels, hidden, std=std)
        self.fc2 = Linear(hidden, channels, std=std)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        return grid.with_tokens(self.fc2(F.gelu(self.fc1(grid.tokens))))


class SwinSubBlock(Module):
    def __init__(
        self,
        channels: int,
        heads: int,
        spec: WindowSpec,
        use_mrf: bool = True,
        mrf_mode: str = MODEL_DEFAULTS["mrf_mode"],
        mlp_ratio: float = MODEL_DEFAULTS["mlp_ratio"],
        rel_pos_bias: bool = True,
        std: float = MODEL_DEFAULTS["init_std"],
    ):
        self.norm1 = LayerNorm(channels)
        self.attn = WindowAttention(channels, heads, spec.window, use_bias_table=rel_pos_bias, std=std)
        self.norm2 = LayerNorm(channels)
        self.mixer = MrfBlock(channels, mrf_mode) if use_mrf else MlpBlock(channels, mlp_ratio, std)
        self._spec = spec

    @property
    def spec(self) -> WindowSpec:
        return self._spec

    def forward(self, grid: TokenGrid) -> TokenGrid:
        normed = grid.with_tokens(self.norm1(grid.tokens)).grid()
        windows, context = window_partition(normed, self._spec)
        mask = cached_attention_mask(grid.dims, self._spec)
        attended = window_reverse(self.attn(windows, mask), context)
        n = grid.batch
        x = grid.tokens + reshape(attended, (n, -1, grid.channels))
        mixed = self.mixer(grid.with_tokens(self.norm2(x)))
        return grid.with_tokens(x + mixed.tokens)


class SwinBlockPair(Module):
    """W-MSA sub-block followed by its shifted (SW-MSA) twin.

    ``depth`` > 2 repeats the pair; sub-blocks are named ``block0``, ``block1``, ...
    """

    def __init__(self, channels: int, heads: int, window: Tuple[int, int, int], depth: int = 2, **kwargs):
        if depth < 2 or depth % 2:
            raise ConfigError(f"block depth must be an even number >= 2, got {depth}")
        spec = WindowSpec(tuple(window))
        for index in range(depth):
            block_spec = spec.shifted_twin() if index % 2 else spec
            setattr(self, f"block{index}", SwinSubBlock(channels, heads, block_spec, **kwargs))
        self._depth = depth

    def blocks(self):
        return [getattr(self, f"block{index}") for index in range(self._depth)]

    def forward(self, grid: TokenGrid) -> TokenGrid:
        for block in self.blocks():
            grid = block(grid)
        return grid


def swin_block_forward(grid: TokenGrid, pair: SwinBlockPair) -> TokenGrid:
    return pair(grid)
