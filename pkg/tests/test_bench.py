"""Tests for the parameter and attention-cost report."""

import pytest

from octfluid.helpers.config import ModelConfig
from octfluid.helpers.constants import SWEEP_SPACE
from octfluid.training.bench import bench, default_bench_grids

MICRO = ModelConfig(embed_dim=8, num_heads=(2, 2, 4, 8), window_size=(2, 2, 2))


@pytest.fixture(scope="module")
def report():
    return bench(MICRO, sweep=True)


def test_four_ablation_variants(report):
    params = report.variant_params
    assert set(params) == {(True, True), (True, False), (False, True), (False, False)}
    assert params[(True, False)] > params[(True, True)]
    assert len(set(params.values())) == 4


def test_mixer_formulas_match_measured_counts(report):
    assert [row[0] for row in report.mixer_rows] == [8, 16, 32, 64]
    for channels, mrf_formula, mrf_measured, mlp_formula, mlp_measured in report.mixer_rows:
        assert mrf_formula == mrf_measured, channels
        assert mlp_formula == mlp_measured, channels


def test_default_grids_double_tokens():
    grids = default_bench_grids((2, 2, 2))
    assert grids == [(4, 4, 4), (8, 4, 4), (8, 8, 4)]


def test_windowed_scores_grow_linearly(report):
    rows = report.score_rows
    assert [row.tokens for row in rows] == [64, 128, 256]
    assert [row.windowed for row in rows] == [512, 1024, 2048]
    assert [row.global_ for row in rows] == [4096, 16384, 65536]


def test_text_lists_every_section(report):
    text = report.to_text()
    assert "va=on mrf=on" in text
    assert "4x4x4 (64 tokens): 512, 4096" in text
    for key in SWEEP_SPACE:
        assert f"  {key}: " in text
    assert "forward wall time" not in text


def test_heads_scale_score_entries():
    two_heads = bench(MICRO, grids=[(4, 4, 4)], heads=2)
    assert two_heads.score_rows[0].windowed == 1024
    assert two_heads.score_rows[0].global_ == 8192


def test_time_forward_reports_seconds():
    timed = bench(MICRO, grids=[(4, 4, 4)], time_forward=True)
    assert timed.forward_seconds is not None and timed.forward_seconds > 0
