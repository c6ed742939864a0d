"""
Randomised finite-difference checks for every differentiable building block.

Each check builds small random inputs, reduces the op output to a scalar with
a fixed random weighting (a plain sum would hide errors in ops whose outputs
sum to a constant, such as softmax), and runs :func:`grad_check`.
"""

import logging
from typing import Callable, Dict, List, Sequence

import numpy as np

from octfluid.autodiff import functional as F
from octfluid.autodiff.gradcheck import GradCheckReport, grad_check
from octfluid.autodiff.module import Module
from octfluid.autodiff.tensor import Tensor, concat, exp, log, matmul, pad, roll, tanh
from octfluid.evaluation.losses import dice_loss
from octfluid.helpers.config import ModelConfig
from octfluid.helpers.constants import GRADCHECK_DEFAULTS
from octfluid.helpers.random_seed import make_rng
from octfluid.network.model import FluidSegmenter
from octfluid.network.swin_block import MrfBlock, SwinBlockPair
from octfluid.network.va_block import ResidualConvBlock, VolumetricAttention
from octfluid.network.windowing import (
    PatchEmbed,
    PatchMerging,
    TokenGrid,
    WindowAttention,
    WindowSpec,
    build_attention_mask,
    window_partition,
    window_reverse,
)

logger = logging.getLogger(__name__)

SUITE_MODULES = ("tensor", "ops", "windowing", "blocks", "va", "model", "losses")

MICRO_MODEL = ModelConfig(embed_dim=8, num_heads=(2, 2, 4, 8), window_size=(2, 2, 2))


def _random(rng: np.random.Generator, *shape, scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(size=shape) * scale)


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return (out * Tensor(weights)).sum()


def _check_module(label: str, module: Module, inputs: Sequence[Tensor], f: Callable, **kwargs) -> GradCheckReport:
    names = [f"input{i}" for i in range(len(inputs))] + [name for name, _ in module.named_parameters()]
    return grad_check(f, list(inputs) + module.parameters(), names=names, label=label, **kwargs)


# =============================================================================
# Checks per area
# =============================================================================


def tensor_checks(rng: np.random.Generator) -> List[GradCheckReport]:
    x = _random(rng, 3, 4)
    y = _random(rng, 3, 4)
    a = _random(rng, 2, 3, 4)
    b = _random(rng, 4, 5)
    w_mm = rng.normal(size=(5, 6))
    u = _random(rng, 2, 3)
    v = _random(rng, 2, 2)
    w_cat = rng.normal(size=(2, 4))
    return [
        grad_check(lambda x: (x * x).sum(), [x], label="tensor.square_sum"),
        grad_check(
            lambda x, y: (exp(x * 0.5) / (y * y + 1.0) + tanh(x) * y).sum() + log(y * y + 1.0).sum()
            + ((x * x + 1.0) ** 1.5).mean() - (x - y).sum(),
            [x, y],
            label="tensor.elementwise",
        ),
        grad_check(
            lambda a, b: _weighted(matmul(a, b).reshape(6, 5).transpose(), w_mm),
            [a, b],
            label="tensor.matmul_reshape",
        ),
        grad_check(
            lambda u, v: _weighted(
                roll(pad(concat([u, v], axis=1), [(0, 0), (1, 1)], mode="edge"), (1,), (1,))[:, 1:5],
                w_cat,
            ),
            [u, v],
            label="tensor.concat_pad_roll",
        ),
    ]


def ops_checks(rng: np.random.Generator) -> List[GradCheckReport]:
    x = _random(rng, 1, 2, 4, 4, 4)
    w = _random(rng, 3, 2, 3, 3, 3, scale=0.3)
    b = _random(rng, 3)
    xg = _random(rng, 1, 4, 5, 5, 5)
    wg = _random(rng, 4, 2, 3, 3, 3, scale=0.3)
    xt = _random(rng, 1, 2, 2, 2, 2)
    wt = _random(rng, 2, 3, 2, 2, 2)
    bt = _random(rng, 3)
    xl = _random(rng, 4, 6)
    gl, bl = _random(rng, 6), _random(rng, 6)
    xi = _random(rng, 2, 3, 3, 3, 3)
    gi, bi = _random(rng, 3), _random(rng, 3)
    xs = _random(rng, 4, 5)
    ws, bs = _random(rng, 5, 3), _random(rng, 3)
    return [
        grad_check(lambda x, w, b: _weighted(F.conv3d(x, w, b, padding=1), rng_weights(3, 4, 4, 4)),
                   [x, w, b], label="ops.conv3d"),
        grad_check(lambda x, w: _weighted(F.conv3d(x, w, None, padding=2, dilation=2, groups=2),
                                          rng_weights(4, 5, 5, 5)),
                   [xg, wg], label="ops.conv3d_dilated_grouped"),
        grad_check(lambda x, w, b: _weighted(F.conv_transpose3d(x, w, b), rng_weights(3, 4, 4, 4)),
                   [xt, wt, bt], label="ops.conv_transpose3d"),
        grad_check(lambda x, g, b: _weighted(F.layer_norm(x, g, b), rng_weights(4, 6)),
                   [xl, gl, bl], label="ops.layer_norm"),
        grad_check(lambda x, g, b: _weighted(F.instance_norm(x, g, b), rng_weights(2, 3, 3, 3, 3)),
                   [xi, gi, bi], label="ops.instance_norm"),
        grad_check(lambda x, w, b: _weighted(F.softmax(F.gelu(F.linear(x, w, b)), axis=-1), rng_weights(4, 3)),
                   [xs, ws, bs], label="ops.linear_gelu_softmax"),
    ]


def rng_weights(*shape) -> np.ndarray:
    """Deterministic reduction weights (independent of the input stream)."""
    return np.random.default_rng(sum(shape) * 7919).normal(size=shape)


def windowing_checks(rng: np.random.Generator) -> List[GradCheckReport]:
    dims = (4, 4, 4)
    spec = WindowSpec((2, 2, 2), (1, 1, 1))
    attn = WindowAttention(8, 2, spec.window, std=0.5).initialize(int(rng.integers(1 << 30)))
    grid = _random(rng, 1, *dims, 8)
    weights = rng_weights(1, *dims, 8)
    mask = build_attention_mask(dims, spec)

    def shifted_attention(grid, *_):
        windows, context = window_partition(grid, spec)
        return _weighted(window_reverse(attn(windows, mask), context), weights)

    # 5x4x4 grid forces padded windows
    padded_dims = (5, 4, 4)
    pad_spec = WindowSpec((4, 4, 4))
    pad_attn = WindowAttention(4, 1, pad_spec.window, std=0.5).initialize(int(rng.integers(1 << 30)))
    pad_grid = _random(rng, 1, *padded_dims, 4)
    pad_weights = rng_weights(1, *padded_dims, 4)
    pad_mask = build_attention_mask(padded_dims, pad_spec)

    def padded_attention(grid, *_):
        windows, context = window_partition(grid, pad_spec)
        return _weighted(window_reverse(pad_attn(windows, pad_mask), context), pad_weights)

    merge = PatchMerging(4, std=0.5).initialize(int(rng.integers(1 << 30)))
    tokens = _random(rng, 1, 64, 4)
    merge_weights = rng_weights(1, 8, 8)

    embed = PatchEmbed(1, 2, 8, True, 0.5).initialize(int(rng.integers(1 << 30)))
    volume = _random(rng, 1, 1, 4, 4, 4)
    embed_weights = rng_weights(1, 8, 8)

    return [
        _check_module("windowing.shifted_attention", attn, [grid], shifted_attention),
        _check_module("windowing.padded_attention", pad_attn, [pad_grid], padded_attention),
        _check_module("windowing.patch_merging", merge, [tokens],
                      lambda t, *_: _weighted(merge(TokenGrid(t, dims)).tokens, merge_weights)),
        _check_module("windowing.patch_partition", embed, [volume],
                      lambda v, *_: _weighted(embed(v).tokens, embed_weights)),
    ]


def blocks_checks(rng: np.random.Generator) -> List[GradCheckReport]:
    dims = (4, 4, 4)
    reports = []
    for label, kwargs in (("blocks.swin_mrf_1d", {}), ("blocks.swin_mlp", {"use_mrf": False})):
        pair = SwinBlockPair(8, 2, (2, 2, 2), std=0.3, **kwargs).initialize(int(rng.integers(1 << 30)))
        tokens = _random(rng, 1, 64, 8)
        weights = rng_weights(1, 64, 8)
        reports.append(_check_module(
            label, pair, [tokens], lambda t, *_: _weighted(pair(TokenGrid(t, dims)).tokens, weights),
            max_checks=GRADCHECK_DEFAULTS["max_checks"],
        ))
    mrf = MrfBlock(4, mode="3d").initialize(int(rng.integers(1 << 30)))
    tokens = _random(rng, 1, 64, 4)
    weights = rng_weights(1, 64, 4)
    reports.append(_check_module(
        "blocks.mrf_3d", mrf, [tokens], lambda t, *_: _weighted(mrf(TokenGrid(t, dims)).tokens, weights),
        max_checks=GRADCHECK_DEFAULTS["max_checks"],
    ))
    return reports


def va_checks(rng: np.random.Generator) -> List[GradCheckReport]:
    va = VolumetricAttention(4).initialize(int(rng.integers(1 << 30)))
    x = _random(rng, 1, 4, 4, 4, 4)
    weights = rng_weights(1, 4, 4, 4, 4)
    rcb = ResidualConvBlock(4, 2).initialize(int(rng.integers(1 << 30)))
    xr = _random(rng, 1, 4, 4, 4, 4)
    weights_r = rng_weights(1, 2, 4, 4, 4)
    return [
        _check_module("va.volumetric_attention", va, [x], lambda x, *_: _weighted(va(x), weights),
                      max_checks=GRADCHECK_DEFAULTS["max_checks"]),
        _check_module("va.residual_conv", rcb, [xr], lambda x, *_: _weighted(rcb(x), weights_r),
                      max_checks=GRADCHECK_DEFAULTS["max_checks"]),
    ]


def losses_checks(rng: np.random.Generator) -> List[GradCheckReport]:
    x = _random(rng, 1, 2, 4, 4, 4)
    w = _random(rng, 4, 2, 3, 3, 3, scale=0.3)
    labels = rng.integers(0, 4, size=(1, 4, 4, 4))
    return [
        grad_check(lambda x, w: dice_loss(F.softmax(F.conv3d(x, w, None, padding=1), axis=1), labels),
                   [x, w], label="losses.dice_conv_softmax"),
    ]


def model_checks(
    rng: np.random.Generator,
    max_checks: int = GRADCHECK_DEFAULTS["model_max_checks"],
    exhaustive_size: int = GRADCHECK_DEFAULTS["exhaustive_size"],
) -> List[GradCheckReport]:
    """End-to-end check of the micro model on a 16^3 volume.

    Biases, norms and small bias tables are checked entry by entry; larger
    weights are sampled ``max_checks`` entries at a time.
    """
    model = FluidSegmenter(MICRO_MODEL.with_overrides(seed=int(rng.integers(1 << 30))))
    volume = _random(rng, 1, 1, 16, 16, 16)
    labels = rng.integers(0, 4, size=(1, 16, 16, 16))
    return [
        _check_module("model.micro", model, [volume], lambda v, *_: dice_loss(model(v), labels),
                      max_checks=max_checks, exhaustive_size=exhaustive_size),
    ]


SUITE: Dict[str, Callable[[np.random.Generator], List[GradCheckReport]]] = {
    "tensor": tensor_checks,
    "ops": ops_checks,
    "windowing": windowing_checks,
    "blocks": blocks_checks,
    "va": va_checks,
    "losses": losses_checks,
    "model": model_checks,
}


def run_suite(module: str = "all", seed: int = 0) -> List[GradCheckReport]:
    """Run the checks for one area (or ``"all"``) with inputs drawn from ``seed``."""
    if module != "all" and module not in SUITE:
        raise ValueError(f"unknown gradcheck module {module!r}; choose from {', '.join(SUITE_MODULES)} or all")
    names = SUITE_MODULES if module == "all" else (module,)
    reports = []
    for name in names:
        reports.extend(SUITE[name](make_rng(seed)))
    return reports
