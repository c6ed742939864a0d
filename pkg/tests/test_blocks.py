"""Tests for the transformer blocks, the MRF mixer and the skip-connection blocks."""

import numpy as np
import pytest

from octfluid.autodiff import functional as F
from octfluid.autodiff.tensor import Tensor, precision
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.network.swin_block import MlpBlock, MrfBlock, SwinBlockPair
from octfluid.network.va_block import ResidualConvBlock, VolumetricAttention
from octfluid.network.windowing import TokenGrid
from octfluid.training.bench import mlp_parameter_formula, mrf_parameter_formula


def np_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x ** 3)))


def mrf_1d_oracle(tokens, block):
    """Per-token 1x1 convolutions and a dilated 3-tap convolution along the sequence."""
    w1 = block.conv1.weight.data[:, :, 0, 0, 0]
    wd = block.depthwise.weight.data[:, 0, 0, 0, 0]
    wk = block.dilated.weight.data[:, :, :, 0, 0]
    wf = block.fuse.weight.data[:, :, 0, 0, 0]
    n, length, _ = tokens.shape
    x1 = np_gelu(tokens @ w1.T + block.conv1.bias.data)
    x2 = np_gelu(x1 * wd + block.depthwise.bias.data)
    padded = np.pad(tokens, ((0, 0), (2, 2), (0, 0)))
    x3 = np.zeros_like(tokens) + block.dilated.bias.data
    for tap in range(3):
        x3 = x3 + padded[:, 2 * tap:2 * tap + length] @ wk[:, :, tap].T
    x3 = np_gelu(x3)
    return np_gelu((x1 + x2 + x3) @ wf.T + block.fuse.bias.data)


def zero_non_norm_parameters(module):
    for name, param in module.named_parameters():
        if "norm" not in name:
            param.data[:] = 0.0


class TestMrfBlock:
    """Multi-receptive-field mixer."""

    def test_matches_sequence_oracle(self):
        block = MrfBlock(6, mode="1d").initialize(0)
        tokens = np.random.default_rng(0).normal(size=(2, 27, 6))
        with precision(np.float64):
            out = block(TokenGrid(Tensor(tokens), (3, 3, 3)))
        np.testing.assert_allclose(out.tokens.data, mrf_1d_oracle(tokens, block), atol=1e-6)

    def test_3d_mode_matches_composed_ops(self):
        block = MrfBlock(4, mode="3d").initialize(1)
        grid = TokenGrid(Tensor(np.random.default_rng(1).normal(size=(1, 64, 4))), (4, 4, 4))
        with precision(np.float64):
            out = block(grid).tokens.data
            x = grid.to_volume()
            x1 = F.gelu(F.conv3d(x, block.conv1.weight, block.conv1.bias))
            x2 = F.gelu(F.conv3d(x1, block.depthwise.weight, block.depthwise.bias, groups=4))
            x3 = F.gelu(F.conv3d(x, block.dilated.weight, block.dilated.bias, padding=2, dilation=2))
            fused = F.gelu(F.conv3d(x1 + x2 + x3, block.fuse.weight, block.fuse.bias))
            expected = TokenGrid.from_volume(fused).tokens.data
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_zero_input_gives_zero_output(self):
        block = MrfBlock(4).initialize(2)
        out = block(TokenGrid(Tensor(np.zeros((1, 8, 4))), (2, 2, 2)))
        np.testing.assert_array_equal(out.tokens.data, 0.0)

    def test_zero_side_branches_reduce_to_two_convolutions(self):
        block = MrfBlock(4).initialize(3)
        for conv in (block.depthwise, block.dilated):
            conv.weight.data[:] = 0.0
            conv.bias.data[:] = 0.0
        tokens = np.random.default_rng(3).normal(size=(1, 8, 4))
        with precision(np.float64):
            out = block(TokenGrid(Tensor(tokens), (2, 2, 2))).tokens.data
        w1 = block.conv1.weight.data[:, :, 0, 0, 0]
        wf = block.fuse.weight.data[:, :, 0, 0, 0]
        x1 = np_gelu(tokens @ w1.T + block.conv1.bias.data)
        expected = np_gelu(x1 @ wf.T + block.fuse.bias.data)
        np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            MrfBlock(4).initialize(0)(TokenGrid(Tensor(np.zeros((1, 8, 6))), (2, 2, 2)))

    def test_unknown_mode_raises(self):
        with pytest.raises(ConfigError):
            MrfBlock(4, mode="2d")

    @pytest.mark.parametrize("channels", [8, 24, 96])
    def test_parameter_formula(self, channels):
        assert MrfBlock(channels, "1d").parameter_count() == mrf_parameter_formula(channels, "1d")
        assert MrfBlock(channels, "3d").parameter_count() == mrf_parameter_formula(channels, "3d")
        assert MlpBlock(channels, 4.0).parameter_count() == mlp_parameter_formula(channels, 4.0)

    def test_mrf_is_lighter_than_mlp(self):
        assert MrfBlock(24).parameter_count() < MlpBlock(24, 4.0).parameter_count()


class TestSwinBlockPair:
    """W-MSA / SW-MSA sub-block pairs."""

    def test_second_block_is_shifted_by_half_window(self):
        pair = SwinBlockPair(8, 2, (4, 4, 4))
        assert pair.block0.spec.shift == (0, 0, 0)
        assert pair.block1.spec.shift == (2, 2, 2)

    def test_deeper_stage_alternates_shift(self):
        pair = SwinBlockPair(8, 2, (2, 2, 2), depth=4)
        shifts = [block.spec.shift for block in pair.blocks()]
        assert shifts == [(0, 0, 0), (1, 1, 1), (0, 0, 0), (1, 1, 1)]

    def test_odd_depth_rejected(self):
        with pytest.raises(ConfigError):
            SwinBlockPair(8, 2, (2, 2, 2), depth=3)

    def test_zero_weights_give_identity(self):
        pair = SwinBlockPair(8, 2, (2, 2, 2)).initialize(0)
        zero_non_norm_parameters(pair)
        tokens = np.random.default_rng(4).normal(size=(1, 64, 8)).astype(np.float32)
        out = pair(TokenGrid(Tensor(tokens), (4, 4, 4)))
        np.testing.assert_array_equal(out.tokens.data, tokens)

    def test_zero_weights_give_identity_with_mlp(self):
        pair = SwinBlockPair(8, 2, (2, 2, 2), use_mrf=False).initialize(0)
        zero_non_norm_parameters(pair)
        tokens = np.random.default_rng(5).normal(size=(1, 27, 8)).astype(np.float32)
        out = pair(TokenGrid(Tensor(tokens), (3, 3, 3)))
        np.testing.assert_array_equal(out.tokens.data, tokens)

    def test_full_scale_shape_preserved(self):
        pair = SwinBlockPair(24, 3, (4, 4, 4)).initialize(0)
        grid = TokenGrid(Tensor(np.random.default_rng(6).normal(size=(1, 16 * 32 * 32, 24))), (16, 32, 32))
        out = pair(grid)
        assert out.tokens.shape == (1, 16 * 32 * 32, 24)
        assert out.dims == (16, 32, 32)

    def test_grid_smaller_than_window(self):
        pair = SwinBlockPair(8, 2, (4, 4, 4)).initialize(1)
        out = pair(TokenGrid(Tensor(np.random.default_rng(7).normal(size=(1, 4, 8))), (1, 2, 2)))
        assert out.tokens.shape == (1, 4, 8)
        assert np.all(np.isfinite(out.tokens.data))


class TestVolumetricAttention:
    """Spatial + channel + identity skip block."""

    def test_zero_branches_give_identity(self):
        va = VolumetricAttention(4).initialize(0)
        zero_non_norm_parameters(va)
        x = np.random.default_rng(0).normal(size=(1, 4, 4, 4, 4)).astype(np.float32)
        np.testing.assert_array_equal(va(Tensor(x)).data, x)

    def test_matches_three_branch_oracle(self):
        va = VolumetricAttention(4).initialize(1)
        x = Tensor(np.random.default_rng(1).normal(size=(1, 4, 3, 4, 5)))
        with precision(np.float64):
            out = va(x).data
            spatial = F.conv3d(
                F.conv3d(x, va.spatial_conv3.weight, va.spatial_conv3.bias, padding=1),
                va.spatial_conv1.weight, va.spatial_conv1.bias,
            )
            channel = F.conv3d(
                F.conv3d(x, va.dw_conv.weight, va.dw_conv.bias, groups=4),
                va.pw_conv.weight, va.pw_conv.bias,
            )
        np.testing.assert_allclose(out - x.data, spatial.data + channel.data, atol=1e-10)

    def test_full_scale_shape(self):
        va = VolumetricAttention(48).initialize(2)
        assert va(Tensor(np.zeros((1, 48, 8, 16, 16)))).shape == (1, 48, 8, 16, 16)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            VolumetricAttention(4)(Tensor(np.zeros((1, 3, 2, 2, 2))))


class TestResidualConvBlock:
    """Decoder fusion block."""

    def test_projects_channels(self):
        block = ResidualConvBlock(8, 4).initialize(0)
        out = block(Tensor(np.random.default_rng(0).normal(size=(1, 8, 4, 4, 4))))
        assert out.shape == (1, 4, 4, 4, 4)
        assert block.shortcut is not None

    def test_same_channels_uses_identity_shortcut(self):
        block = ResidualConvBlock(4, 4)
        assert block.shortcut is None
        assert "shortcut.weight" not in dict(block.named_parameters())

    def test_wrong_input_channels(self):
        with pytest.raises(ShapeError):
            ResidualConvBlock(4, 4)(Tensor(np.zeros((1, 2, 2, 2, 2))))
