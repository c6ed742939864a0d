"""
Differentiable neural-network operations on :class:`Tensor`.

Convolutions gather one strided slice of the padded input per kernel offset
into a column matrix and multiply it by the flattened weight in a single
batched matmul. Plain, grouped (depth-wise) and dilated convolution share that
path; the columns are kept for the weight gradient. Volumes use the
``[N, C, D, H, W]`` layout.
"""

import itertools
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from octfluid.autodiff.tensor import Tensor, as_tensor, make_node, _normalize_axis
from octfluid.helpers.constants import GELU_COEFF, NORM_EPS
from octfluid.helpers.errors import ShapeError, UnsupportedConfig

logger = logging.getLogger(__name__)

IntOrTriple = Union[int, Sequence[int]]


def _triple(value: IntOrTriple) -> Tuple[int, int, int]:
    if isinstance(value, int):
        return (value, value, value)
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise ShapeError(f"expected an int or 3 ints, got {value}")
    return value


# =============================================================================
# Dense layers
# =============================================================================


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as ``[in_features, out_features]``."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    flat = x.data.reshape(-1, x.shape[-1])
    out = flat @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[1],))

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = flat.T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return make_node(out, parents, backward, "linear")


# =============================================================================
# Convolutions
# =============================================================================


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv3d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: IntOrTriple = 1,
    padding: IntOrTriple = 0,
    dilation: IntOrTriple = 1,
    groups: int = 1,
) -> Tensor:
    """3D cross-correlation.

    Args:
        x: input ``[N, Cin, D, H, W]``
        weight: ``[Cout, Cin // groups, kd, kh, kw]``
        bias: optional ``[Cout]``
        stride, padding, dilation: per-axis ints (or one int for all axes)
        groups: number of channel groups (``groups == Cin`` is depth-wise)

    Returns:
        Tensor ``[N, Cout, D', H', W']``
    """
    if x.ndim != 5 or weight.ndim != 5:
        raise ShapeError(f"conv3d expects 5-d input and weight, got {x.shape} and {weight.shape}")
    stride, padding, dilation = _triple(stride), _triple(padding), _triple(dilation)
    n, cin, *spatial = x.shape
    cout, cg, *kernel = weight.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ShapeError(f"conv3d: channels {cin}->{cout} not divisible by groups={groups}")
    if cg != cin // groups:
        raise ShapeError(
            f"conv3d: input {x.shape} has {cin} channels but weight {weight.shape} "
            f"expects {cg * groups} (groups={groups})"
        )
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv3d: bias {bias.shape} does not match {cout} output channels")
    for size, k, p, d in zip(spatial, kernel, padding, dilation):
        if size + 2 * p < d * (k - 1) + 1:
            raise ShapeError(
                f"conv3d: input {x.shape} too small for kernel {weight.shape} "
                f"with padding {padding} and dilation {dilation}"
            )
    out_spatial = tuple(
        conv_output_size(s, k, st, p, d) for s, k, st, p, d in zip(spatial, kernel, stride, padding, dilation)
    )
    og = cout // groups
    count = int(np.prod(out_spatial))

    xp = np.pad(x.data, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))
    xg = xp.reshape((n, groups, cg) + xp.shape[2:])
    wg = weight.data.reshape((groups, og, cg) + tuple(kernel))

    def window(offset):
        return (Ellipsis,) + tuple(
            slice(o * d, o * d + st * (size - 1) + 1, st)
            for o, d, st, size in zip(offset, dilation, stride, out_spatial)
        )

    # offsets enumerate the kernel row-major, matching the weight layout
    offsets = list(itertools.product(*(range(k) for k in kernel)))
    taps = len(offsets)
    cols = np.empty((n, groups, cg, taps) + out_spatial, dtype=xp.dtype)
    for i, offset in enumerate(offsets):
        cols[:, :, :, i] = xg[window(offset)]
    cols = cols.reshape(n, groups, cg * taps, count)
    w2 = wg.reshape(groups, og, cg * taps)
    out = np.matmul(w2[None], cols).reshape((n, cout) + out_spatial)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1, 1)

    def backward(g):
        go = g.reshape(n, groups, og, count)
        gw = np.matmul(go, np.swapaxes(cols, -1, -2)).sum(axis=0)
        gcols = np.matmul(np.swapaxes(w2, -1, -2)[None], go).reshape((n, groups, cg, taps) + out_spatial)
        gxg = np.zeros_like(xg)
        for i, offset in enumerate(offsets):
            gxg[window(offset)] += gcols[:, :, :, i]
        gx = gxg.reshape(xp.shape)
        crop = (slice(None), slice(None)) + tuple(slice(p, p + s) for p, s in zip(padding, spatial))
        gx = gx[crop]
        gb = g.sum(axis=(0, 2, 3, 4)) if bias is not None else None
        return gx, gw.reshape(weight.shape), gb

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return make_node(out, parents, backward, "conv3d")


def conv_transpose3d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 2,
    kernel: int = 2,
) -> Tensor:
    """Transposed convolution that exactly doubles every spatial dim.

    ``weight`` is ``[Cin, Cout, 2, 2, 2]``; each input voxel is spread over its
    own 2x2x2 output block, so blocks never overlap.
    """
    if stride != 2 or kernel != 2:
        raise UnsupportedConfig(f"conv_transpose3d supports stride=kernel=2 only, got {stride}/{kernel}")
    if x.ndim != 5 or weight.ndim != 5 or weight.shape[2:] != (2, 2, 2):
        raise ShapeError(f"conv_transpose3d expects 5-d input and [Cin,Cout,2,2,2] weight, got {x.shape}, {weight.shape}")
    n, cin, d, h, w = x.shape
    if weight.shape[0] != cin:
        raise ShapeError(f"conv_transpose3d: input {x.shape} vs weight {weight.shape}")
    cout = weight.shape[1]
    # (N, D, H, W, Cout, 2, 2, 2)
    blocks = np.tensordot(x.data, weight.data, axes=([1], [0]))
    out = blocks.transpose(0, 4, 1, 5, 2, 6, 3, 7).reshape(n, cout, 2 * d, 2 * h, 2 * w)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1, 1)

    def backward(g):
        gb_blocks = g.reshape(n, cout, d, 2, h, 2, w, 2).transpose(0, 2, 4, 6, 1, 3, 5, 7)
        gx = np.tensordot(gb_blocks, weight.data, axes=([4, 5, 6, 7], [1, 2, 3, 4]))
        gx = gx.transpose(0, 4, 1, 2, 3)
        gw = np.tensordot(x.data, gb_blocks, axes=([0, 2, 3, 4], [0, 1, 2, 3]))
        gbias = g.sum(axis=(0, 2, 3, 4)) if bias is not None else None
        return gx, gw, gbias

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return make_node(out, parents, backward, "conv_transpose3d")


# =============================================================================
# Normalisation
# =============================================================================


def _normalize(x: Tensor, axes: Tuple[int, ...], gamma: Tensor, beta: Tensor, affine_shape, eps: float, op: str):
    mean = x.data.mean(axis=axes, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    g_aff = gamma.data.reshape(affine_shape)
    out = xhat * g_aff + beta.data.reshape(affine_shape)
    reduce_axes = tuple(i for i in range(x.ndim) if affine_shape[i] == 1)

    def backward(g):
        gxhat = g * g_aff
        term1 = gxhat.mean(axis=axes, keepdims=True)
        term2 = (gxhat * xhat).mean(axis=axes, keepdims=True)
        gx = inv_std * (gxhat - term1 - xhat * term2)
        ggamma = (g * xhat).sum(axis=reduce_axes).reshape(gamma.shape)
        gbeta = g.sum(axis=reduce_axes).reshape(beta.shape)
        return gx, ggamma, gbeta

    return make_node(out, (x, gamma, beta), backward, op)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalise over the last axis, then apply ``gamma``/``beta``."""
    channels = x.shape[-1] if x.ndim else 0
    if channels == 0:
        raise ShapeError(f"layer_norm: zero-length channel dim in {x.shape}")
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"layer_norm: input {x.shape} vs gamma {gamma.shape} / beta {beta.shape}")
    affine = (1,) * (x.ndim - 1) + (channels,)
    return _normalize(x, (x.ndim - 1,), gamma, beta, affine, eps, "layer_norm")


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalise each ``(n, c)`` volume over D, H, W."""
    if x.ndim != 5:
        raise ShapeError(f"instance_norm expects [N,C,D,H,W], got {x.shape}")
    channels = x.shape[1]
    if channels == 0:
        raise ShapeError(f"instance_norm: zero-length channel dim in {x.shape}")
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"instance_norm: input {x.shape} vs gamma {gamma.shape} / beta {beta.shape}")
    return _normalize(x, (2, 3, 4), gamma, beta, (1, channels, 1, 1, 1), eps, "instance_norm")


# =============================================================================
# Activations
# =============================================================================


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: ``0.5 x (1 + tanh(0.7978845608 (x + 0.044715 x^3)))``."""
    a = x.data
    inner = GELU_COEFF * (a + 0.044715 * a ** 3)
    t = np.tanh(inner)
    out = 0.5 * a * (1.0 + t)

    def backward(g):
        d_inner = GELU_COEFF * (1.0 + 3.0 * 0.044715 * a * a)
        return (g * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner),)

    return make_node(out, (x,), backward, "gelu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), backward, "softmax")


def one_hot(labels: np.ndarray, num_classes: int, axis: int = 1) -> np.ndarray:
    """Integer labels ``[N, ...]`` to a float one-hot array with classes on ``axis``."""
    labels = np.asarray(labels)
    eye = np.eye(num_classes, dtype=np.float32)[labels]
    return np.moveaxis(eye, -1, axis)


def as_volume(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 5:
        raise ShapeError(f"expected a [N,C,D,H,W] tensor, got {x.shape}")
    return x
