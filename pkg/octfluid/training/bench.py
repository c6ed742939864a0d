"""
Parameter and attention-cost report for a model config.

Covers the four ablation variants (VA on/off x MRF on/off), the per-layer
mixer parameter formulas next to the measured counts, and the number of
attention score entries for windowed versus global attention on growing
token grids.
"""

import logging
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from octfluid.autodiff.tensor import Tensor, no_grad
from octfluid.helpers.config import ModelConfig
from octfluid.helpers.constants import SWEEP_SPACE
from octfluid.network.model import FluidSegmenter
from octfluid.network.swin_block import MlpBlock, MrfBlock
from octfluid.network.windowing import global_score_entries, windowed_score_entries

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]


def mrf_parameter_formula(channels: int, mode: str = "1d") -> int:
    """``k x C_in x C_out`` weights plus ``C`` biases for each of the four convolutions."""
    c = channels
    dilated_taps = 3 if mode == "1d" else 27
    return (c * c + c) + (c + c) + (dilated_taps * c * c + c) + (c * c + c)


def mlp_parameter_formula(channels: int, ratio: float) -> int:
    hidden = int(channels * ratio)
    return (channels * hidden + hidden) + (hidden * channels + channels)


def default_bench_grids(window: Sequence[int]) -> List[Dims]:
    """Three token grids, each twice the tokens of the previous one."""
    base = [2 * w for w in window]
    return [tuple(base), (2 * base[0], base[1], base[2]), (2 * base[0], 2 * base[1], base[2])]


@dataclass
class ScoreEntryRow:
    dims: Dims
    tokens: int
    windowed: int
    global_: int


@dataclass
class BenchReport:
    config: ModelConfig
    variant_params: Dict[Tuple[bool, bool], int]
    mixer_rows: List[Tuple[int, int, int, int, int]]
    score_rows: List[ScoreEntryRow]
    forward_seconds: Optional[float] = None
    sweep: Dict[str, tuple] = field(default_factory=dict)

    def lines(self) -> List[str]:
        out = ["parameters per variant:"]
        for (use_va, use_mrf), count in self.variant_params.items():
            out.append(f"  va={'on' if use_va else 'off'} mrf={'on' if use_mrf else 'off'}: {count}")
        out.append("mixer parameters per layer (channels: mrf formula/measured, mlp formula/measured):")
        for channels, mrf_formula, mrf_measured, mlp_formula, mlp_measured in self.mixer_rows:
            out.append(f"  C={channels}: mrf {mrf_formula}/{mrf_measured}, mlp {mlp_formula}/{mlp_measured}")
        out.append("attention score entries (tokens: windowed, global):")
        for row in self.score_rows:
            dims = "x".join(str(d) for d in row.dims)
            out.append(f"  {dims} ({row.tokens} tokens): {row.windowed}, {row.global_}")
        if self.forward_seconds is not None:
            out.append(f"forward wall time: {self.forward_seconds:.3f}s")
        if self.sweep:
            out.append("hyper-parameter sweep:")
            for key, values in self.sweep.items():
                out.append(f"  {key}: {', '.join(str(v) for v in values)}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def bench(
    cfg: ModelConfig,
    grids: Optional[Sequence[Dims]] = None,
    heads: int = 1,
    time_forward: bool = False,
    sweep: bool = False,
) -> BenchReport:
    variant_params = {}
    for use_va, use_mrf in product((True, False), (True, False)):
        variant = cfg.with_overrides(use_va=use_va, use_mrf=use_mrf)
        variant_params[(use_va, use_mrf)] = FluidSegmenter(variant, initialize=False).parameter_count()

    mixer_rows = []
    for level in range(cfg.stages + 1):
        channels = cfg.stage_dim(level)
        mixer_rows.append((
            channels,
            mrf_parameter_formula(channels, cfg.mrf_mode),
            MrfBlock(channels, cfg.mrf_mode).parameter_count(),
            mlp_parameter_formula(channels, cfg.mlp_ratio),
            MlpBlock(channels, cfg.mlp_ratio).parameter_count(),
        ))

    grids = default_bench_grids(cfg.window_size) if grids is None else grids
    score_rows = [
        ScoreEntryRow(
            dims=tuple(dims),
            tokens=int(np.prod(dims)),
            windowed=windowed_score_entries(dims, cfg.window_size, heads),
            global_=global_score_entries(dims, heads),
        )
        for dims in grids
    ]

    seconds = None
    if time_forward:
        model = FluidSegmenter(cfg)
        side = cfg.downsample
        volume = Tensor(np.zeros((1, cfg.in_channels, side, side, side), dtype=np.float32))
        with no_grad():
            started = time.perf_counter()
            model(volume)
            seconds = time.perf_counter() - started
        logger.debug("Forward of a %d^3 volume took %.3fs", side, seconds)

    return BenchReport(
        config=cfg,
        variant_params=variant_params,
        mixer_rows=mixer_rows,
        score_rows=score_rows,
        forward_seconds=seconds,
        sweep=dict(SWEEP_SPACE) if sweep else {},
    )
