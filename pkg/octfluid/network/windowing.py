"""
Token-grid bookkeeping and windowed multi-head self-attention.

Token grids are kept as ``[N, d, h, w, C]`` tensors while windowing and as
``[N, d*h*w, C]`` sequences (row-major over ``d, h, w``) inside blocks.
Grids that do not divide the window are zero-padded at the far end of each
axis; padded tokens get their own region label so the attention mask keeps
them apart from real tokens.
"""

import functools
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from octfluid.autodiff import functional as F
from octfluid.autodiff.layers import LayerNorm, Linear
from octfluid.autodiff.module import Module, Parameter, TruncNormal
from octfluid.autodiff.tensor import Tensor, concat, matmul, pad, reshape, roll, take, transpose
from octfluid.helpers.constants import MASK_VALUE, MODEL_DEFAULTS
from octfluid.helpers.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]


# =============================================================================
# Types
# =============================================================================


class TokenGrid:
    """A batch of token sequences laid out on a ``(d, h, w)`` grid."""

    def __init__(self, tokens: Tensor, dims: Dims):
        dims = tuple(int(v) for v in dims)
        if tokens.ndim != 3 or tokens.shape[1] != dims[0] * dims[1] * dims[2]:
            raise ShapeError(f"tokens {tokens.shape} do not match grid dims {dims}")
        self.tokens = tokens
        self.dims = dims

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]

    @property
    def batch(self) -> int:
        return self.tokens.shape[0]

    def grid(self) -> Tensor:
        """``[N, d, h, w, C]`` view of the tokens."""
        return reshape(self.tokens, (self.batch,) + self.dims + (self.channels,))

    def to_volume(self) -> Tensor:
        """``[N, C, d, h, w]`` layout for convolutions."""
        return transpose(self.grid(), (0, 4, 1, 2, 3))

    @classmethod
    def from_grid(cls, grid: Tensor) -> "TokenGrid":
        n, d, h, w, c = grid.shape
        return cls(reshape(grid, (n, d * h * w, c)), (d, h, w))

    @classmethod
    def from_volume(cls, volume: Tensor) -> "TokenGrid":
        return cls.from_grid(transpose(volume, (0, 2, 3, 4, 1)))

    def with_tokens(self, tokens: Tensor) -> "TokenGrid":
        return TokenGrid(tokens, self.dims)

    def __repr__(self):
        return f"TokenGrid(dims={self.dims}, channels={self.channels}, batch={self.batch})"


@dataclass(frozen=True)
class WindowSpec:
    window: Dims
    shift: Dims = (0, 0, 0)

    def __post_init__(self):
        if len(self.window) != 3 or len(self.shift) != 3:
            raise ConfigError(f"window and shift need three entries, got {self.window} / {self.shift}")
        for w, s in zip(self.window, self.shift):
            if w < 1 or not 0 <= s < w:
                raise ConfigError(f"invalid window spec window={self.window} shift={self.shift}")

    @property
    def volume(self) -> int:
        return self.window[0] * self.window[1] * self.window[2]

    @property
    def shifted(self) -> bool:
        return any(self.shift)

    def shifted_twin(self) -> "WindowSpec":
        return WindowSpec(self.window, tuple(w // 2 for w in self.window))

    def padded_dims(self, dims: Dims) -> Dims:
        return tuple(-(-size // w) * w for size, w in zip(dims, self.window))

    def num_windows(self, dims: Dims) -> int:
        padded = self.padded_dims(dims)
        return int(np.prod([p // w for p, w in zip(padded, self.window)]))


@dataclass(frozen=True)
class WindowContext:
    """What window_reverse needs to undo window_partition."""

    batch: int
    dims: Dims
    padded_dims: Dims
    spec: WindowSpec

    @property
    def has_padding(self) -> bool:
        return self.dims != self.padded_dims


# =============================================================================
# Patch partition / merging
# =============================================================================


def patch_partition(volume: Tensor, patch_size: int, proj: Linear, norm: Optional[LayerNorm] = None) -> TokenGrid:
    """Split ``[N, Cin, D, H, W]`` into non-overlapping cubes and project each.

    The patch vector lists voxels in ``(channel, z, y, x)`` row-major order.
    """
    if volume.ndim != 5:
        raise ShapeError(f"patch_partition expects [N,C,D,H,W], got {volume.shape}")
    n, c, d, h, w = volume.shape
    p = patch_size
    if d % p or h % p or w % p:
        raise ShapeError(f"volume dims {(d, h, w)} not divisible by patch size {p}")
    dims = (d // p, h // p, w // p)
    x = reshape(volume, (n, c, dims[0], p, dims[1], p, dims[2], p))
    x = transpose(x, (0, 2, 4, 6, 1, 3, 5, 7))
    x = reshape(x, (n, dims[0] * dims[1] * dims[2], c * p ** 3))
    tokens = proj(x)
    if norm is not None:
        tokens = norm(tokens)
    return TokenGrid(tokens, dims)


def merge_offsets():
    """Neighbour order used when merging: ``(dz, dy, dx)`` row-major over {0, 1}."""
    return list(itertools.product((0, 1), repeat=3))


def merge_neighbours(grid: TokenGrid, pad_odd: bool = False) -> TokenGrid:
    """Concatenate each 2x2x2 neighbourhood into one ``8C`` token."""
    dims = grid.dims
    x = grid.grid()
    if any(size % 2 for size in dims):
        if not pad_odd:
            raise ShapeError(f"patch merging needs even grid dims, got {dims}")
        x = pad(x, [(0, 0)] + [(0, size % 2) for size in dims] + [(0, 0)])
    parts = [x[:, dz::2, dy::2, dx::2, :] for dz, dy, dx in merge_offsets()]
    return TokenGrid.from_grid(concat(parts, axis=-1))


def patch_merging(grid: TokenGrid, norm: LayerNorm, proj: Linear, pad_odd: bool = False) -> TokenGrid:
    """Halve the grid and project ``8C -> 2C`` after layer norm."""
    merged = merge_neighbours(grid, pad_odd=pad_odd)
    return merged.with_tokens(proj(norm(merged.tokens)))


class PatchEmbed(Module):
    def __init__(self, in_channels: int, patch_size: int, embed_dim: int, use_norm: bool, std: float):
        self.proj = Linear(in_channels * patch_size ** 3, embed_dim, std=std)
        self.norm = LayerNorm(embed_dim) if use_norm else None
        self._patch_size = patch_size

    def forward(self, volume: Tensor) -> TokenGrid:
        return patch_partition(volume, self._patch_size, self.proj, self.norm)


class PatchMerging(Module):
    def __init__(self, channels: int, std: float):
        self.norm = LayerNorm(8 * channels)
        self.reduction = Linear(8 * channels, 2 * channels, bias=False, std=std)

    def forward(self, grid: TokenGrid) -> TokenGrid:
        return patch_merging(grid, self.norm, self.reduction)


# =============================================================================
# Windows
# =============================================================================


def window_partition(grid: Tensor, spec: WindowSpec) -> Tuple[Tensor, WindowContext]:
    """``[N, d, h, w, C]`` to ``[N * numWindows, T, C]`` (pad, then cyclic shift)."""
    n, d, h, w, c = grid.shape
    dims = (d, h, w)
    padded = spec.padded_dims(dims)
    x = pad(grid, [(0, 0)] + [(0, p - s) for p, s in zip(padded, dims)] + [(0, 0)])
    if spec.shifted:
        x = roll(x, tuple(-s for s in spec.shift), (1, 2, 3))
    wd, wh, ww = spec.window
    x = reshape(x, (n, padded[0] // wd, wd, padded[1] // wh, wh, padded[2] // ww, ww, c))
    x = transpose(x, (0, 1, 3, 5, 2, 4, 6, 7))
    windows = reshape(x, (-1, spec.volume, c))
    return windows, WindowContext(n, dims, padded, spec)


def window_reverse(windows: Tensor, context: WindowContext) -> Tensor:
    """Inverse of :func:`window_partition`: undo the shift, drop padding."""
    spec = context.spec
    pd, ph, pw = context.padded_dims
    wd, wh, ww = spec.window
    c = windows.shape[-1]
    x = reshape(windows, (context.batch, pd // wd, ph // wh, pw // ww, wd, wh, ww, c))
    x = transpose(x, (0, 1, 4, 2, 5, 3, 6, 7))
    x = reshape(x, (context.batch, pd, ph, pw, c))
    if spec.shifted:
        x = roll(x, spec.shift, (1, 2, 3))
    if context.has_padding:
        d, h, w = context.dims
        x = x[:, :d, :h, :w, :]
    return x


def _partition_labels(labels: np.ndarray, spec: WindowSpec) -> np.ndarray:
    pd, ph, pw = labels.shape
    wd, wh, ww = spec.window
    x = labels.reshape(pd // wd, wd, ph // wh, wh, pw // ww, ww)
    return x.transpose(0, 2, 4, 1, 3, 5).reshape(-1, spec.volume)


def region_labels(dims: Dims, spec: WindowSpec) -> np.ndarray:
    """Region label per token of the padded, shifted grid (pad tokens get -1)."""
    padded = spec.padded_dims(dims)
    labels = np.zeros(padded, dtype=np.int64)
    if spec.shifted:
        count = 0
        segments = [
            ((0, p - w), (p - w, p - s), (p - s, p)) if s else ((0, p),)
            for p, w, s in zip(padded, spec.window, spec.shift)
        ]
        for zs, ys, xs in itertools.product(*segments):
            labels[zs[0]:zs[1], ys[0]:ys[1], xs[0]:xs[1]] = count
            count += 1
    is_pad = np.ones(padded, dtype=bool)
    is_pad[: dims[0], : dims[1], : dims[2]] = False
    if spec.shifted:
        is_pad = np.roll(is_pad, tuple(-s for s in spec.shift), axis=(0, 1, 2))
    labels[is_pad] = -1
    return labels


def build_attention_mask(dims: Dims, spec: WindowSpec) -> Optional[np.ndarray]:
    """Additive ``[numWindows, T, T]`` mask, or ``None`` when nothing needs masking."""
    if not spec.shifted and spec.padded_dims(dims) == tuple(dims):
        return None
    windows = _partition_labels(region_labels(dims, spec), spec)
    different = windows[:, :, None] != windows[:, None, :]
    return np.where(different, MASK_VALUE, 0.0).astype(np.float32)


@functools.lru_cache(maxsize=64)
def cached_attention_mask(dims: Dims, spec: WindowSpec) -> Optional[np.ndarray]:
    """Read-only :func:`build_attention_mask`, shared by every block with the same grid and window."""
    mask = build_attention_mask(tuple(dims), spec)
    if mask is not None:
        mask.setflags(write=False)
    return mask


def build_shift_mask(dims: Dims, spec: WindowSpec) -> np.ndarray:
    """Mask for shifted-window attention; only defined for a nonzero shift."""
    if not spec.shifted:
        raise ConfigError("build_shift_mask requires a nonzero shift; unshifted windows need no mask")
    return build_attention_mask(dims, spec)


def pad_token_flags(dims: Dims, spec: WindowSpec) -> np.ndarray:
    """``[numWindows, T]`` booleans marking padding tokens after partition."""
    return _partition_labels(region_labels(dims, spec), spec) < 0


# =============================================================================
# Attention
# =============================================================================


def relative_position_index(window: Dims) -> np.ndarray:
    """``[T, T]`` index into the ``(2wd-1)(2wh-1)(2ww-1)`` bias table."""
    wd, wh, ww = window
    coords = np.stack(np.meshgrid(np.arange(wd), np.arange(wh), np.arange(ww), indexing="ij"))
    flat = coords.reshape(3, -1)
    rel = flat[:, :, None] - flat[:, None, :]
    rel = rel.transpose(1, 2, 0).copy()
    rel[:, :, 0] += wd - 1
    rel[:, :, 1] += wh - 1
    rel[:, :, 2] += ww - 1
    rel[:, :, 0] *= (2 * wh - 1) * (2 * ww - 1)
    rel[:, :, 1] *= 2 * ww - 1
    return rel.sum(-1)


class WindowAttention(Module):
    """Multi-head self-attention inside each window with learned relative bias."""

    def __init__(self, dim: int, heads: int, window: Dims, use_bias_table: bool = True, std: float = MODEL_DEFAULTS["init_std"]):
        if heads < 1 or dim % heads:
            raise ConfigError(f"{dim} channels are not divisible by {heads} heads")
        self.qkv = Linear(dim, 3 * dim, std=std)
        self.proj = Linear(dim, dim, std=std)
        size = (2 * window[0] - 1) * (2 * window[1] - 1) * (2 * window[2] - 1)
        self.bias_table = Parameter((size, heads), TruncNormal(std)) if use_bias_table else None
        self._heads = heads
        self._window = tuple(window)
        self._scale = (dim // heads) ** -0.5
        self._index = relative_position_index(window)

    def attention_weights(self, windows: Tensor, mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
        """Return ``(weights [B, heads, T, T], values [B, heads, T, hd])``."""
        b, t, c = windows.shape
        heads = self._heads
        if c % heads:
            raise ConfigError(f"{c} channels are not divisible by {heads} heads")
        if t != len(self._index):
            raise ShapeError(f"windows hold {t} tokens, attention was built for window {self._window}")
        qkv = self.qkv(windows)
        qkv = transpose(reshape(qkv, (b, t, 3, heads, c // heads)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = matmul(q * self._scale, transpose(k, (0, 1, 3, 2)))
        if self.bias_table is not None:
            bias = take(self.bias_table, self._index)
            scores = scores + transpose(bias, (2, 0, 1))
        if mask is not None:
            num_windows = mask.shape[0]
            if b % num_windows:
                raise ShapeError(f"{b} windows cannot be split into batches of {num_windows}")
            scores = reshape(scores, (b // num_windows, num_windows, heads, t, t))
            scores = scores + Tensor(mask[None, :, None])
            scores = reshape(scores, (b, heads, t, t))
        return F.softmax(scores, axis=-1), v

    def forward(self, windows: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        b, t, c = windows.shape
        weights, v = self.attention_weights(windows, mask)
        out = transpose(matmul(weights, v), (0, 2, 1, 3))
        return self.proj(reshape(out, (b, t, c)))


def window_attention(windows: Tensor, attention: WindowAttention, mask: Optional[np.ndarray] = None) -> Tensor:
    return attention(windows, mask)


# =============================================================================
# Cost accounting
# =============================================================================


def windowed_score_entries(dims: Dims, window: Dims, heads: int = 1) -> int:
    """Attention-score entries computed by windowed attention over a grid."""
    spec = WindowSpec(tuple(window))
    return spec.num_windows(dims) * spec.volume ** 2 * heads


def global_score_entries(dims: Dims, heads: int = 1) -> int:
    tokens = int(np.prod(dims))
    return tokens * tokens * heads
