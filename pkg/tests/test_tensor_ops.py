"""Tests for octfluid.autodiff tensor ops, functional ops and modules."""

import itertools

import numpy as np
import pytest

from octfluid.autodiff import functional as F
from octfluid.autodiff.layers import Conv3d, Linear
from octfluid.autodiff.module import Module
from octfluid.autodiff.tensor import (
    Tensor,
    concat,
    detect_anomaly,
    log,
    no_grad,
    pad,
    precision,
    roll,
    stack,
    take,
)
from octfluid.helpers.errors import AxisError, ConfigError, NumericalError, ShapeError, UnsupportedConfig


def naive_conv3d(x, w, padding=0, dilation=1, groups=1):
    """Direct loop reference for stride-1 3D cross-correlation."""
    n, cin, d, h, wd = x.shape
    cout, cg, kd, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0)) + ((padding, padding),) * 3)
    od = d + 2 * padding - dilation * (kd - 1)
    oh = h + 2 * padding - dilation * (kh - 1)
    ow = wd + 2 * padding - dilation * (kw - 1)
    out = np.zeros((n, cout, od, oh, ow))
    og = cout // groups
    for b, co in itertools.product(range(n), range(cout)):
        group = co // og
        for z, y, xx in itertools.product(range(od), range(oh), range(ow)):
            acc = 0.0
            for ci in range(cg):
                for a, bb, c in itertools.product(range(kd), range(kh), range(kw)):
                    acc += w[co, ci, a, bb, c] * xp[
                        b, group * cg + ci, z + a * dilation, y + bb * dilation, xx + c * dilation
                    ]
            out[b, co, z, y, xx] = acc
    return out


class TestTensorBasics:
    """Dtype handling, backward seeding and graph switches."""

    def test_default_dtype_is_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32

    def test_precision_switches_dtype(self):
        with precision(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_backward_of_square_sum(self):
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [2.0, -4.0, 6.0])

    def test_gradients_accumulate_for_reused_input(self):
        x = Tensor([2.0], requires_grad=True)
        (x * x + x * 3.0).sum().backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_backward_needs_seed_for_non_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2.0).backward()

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_broadcast_gradient_is_summed(self):
        x = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        (x + b).sum().backward()
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))

    def test_detect_anomaly_raises_on_non_finite(self):
        x = Tensor([0.0, 1.0], requires_grad=True)
        with detect_anomaly():
            with pytest.raises(NumericalError):
                log(x)

    def test_reshape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros(6)).reshape(4, 2)

    def test_matmul_inner_dims_checked(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))

    def test_bad_axis_raises(self):
        with pytest.raises(AxisError):
            Tensor(np.zeros((2, 3))).sum(axis=2)


class TestShapeOps:
    """Concatenation, padding, rolling and gathering."""

    def test_concat_splits_gradient(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 3)), requires_grad=True)
        out = concat([a, b], axis=1)
        (out * Tensor(np.arange(10).reshape(2, 5))).sum().backward()
        np.testing.assert_allclose(a.grad, [[0, 1], [5, 6]])
        np.testing.assert_allclose(b.grad, [[2, 3, 4], [7, 8, 9]])

    def test_concat_rejects_mismatched_shapes(self):
        with pytest.raises(ShapeError):
            concat([Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2)))], axis=1)

    def test_edge_pad_folds_gradient_onto_border(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        out = pad(x, [(2, 1)], mode="edge")
        np.testing.assert_allclose(out.data, [1, 1, 1, 2, 3, 3])
        out.sum().backward()
        np.testing.assert_allclose(x.grad, [3.0, 1.0, 2.0])

    def test_constant_pad_crops_gradient(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        pad(x, [(1, 1), (0, 2)]).sum().backward()
        np.testing.assert_allclose(x.grad, np.ones((2, 2)))

    def test_roll_inverts_in_backward(self):
        x = Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
        out = roll(x, (1,), (0,))
        np.testing.assert_allclose(out.data, [4, 1, 2, 3])
        (out * Tensor([1.0, 0.0, 0.0, 0.0])).sum().backward()
        np.testing.assert_allclose(x.grad, [0, 0, 0, 1])

    def test_take_scatter_adds(self):
        table = Tensor(np.eye(3), requires_grad=True)
        take(table, np.array([[0, 2], [2, 2]])).sum().backward()
        np.testing.assert_allclose(table.grad.sum(axis=1), [3.0, 0.0, 9.0])

    def test_fancy_getitem_accumulates(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        x[np.array([0, 0, 2])].sum().backward()
        np.testing.assert_allclose(x.grad, [2.0, 0.0, 1.0])

    def test_stack_adds_axis(self):
        out = stack([Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 3)))], axis=1)
        assert out.shape == (2, 2, 3)


class TestConvolutions:
    """Convolutions against a direct loop reference."""

    @pytest.mark.parametrize("padding,dilation,groups", [(1, 1, 1), (0, 1, 1), (2, 2, 2), (1, 1, 4)])
    def test_conv3d_matches_loops(self, padding, dilation, groups):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 4, 5, 4, 4))
        w = rng.normal(size=(4, 4 // groups, 3, 3, 3))
        with precision(np.float64):
            out = F.conv3d(Tensor(x), Tensor(w), padding=padding, dilation=dilation, groups=groups)
        np.testing.assert_allclose(out.data, naive_conv3d(x, w, padding, dilation, groups), atol=1e-10)

    def test_conv3d_stride(self):
        x = Tensor(np.ones((1, 1, 4, 4, 4)))
        w = Tensor(np.ones((1, 1, 2, 2, 2)))
        out = F.conv3d(x, w, stride=2)
        assert out.shape == (1, 1, 2, 2, 2)
        np.testing.assert_allclose(out.data, 8.0)

    def test_conv3d_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            F.conv3d(Tensor(np.zeros((1, 3, 4, 4, 4))), Tensor(np.zeros((2, 2, 3, 3, 3))))

    def test_conv3d_input_too_small_raises(self):
        with pytest.raises(ShapeError):
            F.conv3d(Tensor(np.zeros((1, 1, 2, 2, 2))), Tensor(np.zeros((1, 1, 3, 3, 3))))

    def test_conv_transpose_doubles_dims(self):
        x = Tensor(np.arange(8, dtype=float).reshape(1, 1, 2, 2, 2))
        w = Tensor(np.ones((1, 3, 2, 2, 2)))
        out = F.conv_transpose3d(x, w, Tensor(np.zeros(3)))
        assert out.shape == (1, 3, 4, 4, 4)
        # every input voxel fills its own 2x2x2 block
        np.testing.assert_allclose(out.data[0, 0, 2:4, 0:2, 2:4], 5.0)

    def test_conv_transpose_rejects_other_strides(self):
        with pytest.raises(UnsupportedConfig):
            F.conv_transpose3d(Tensor(np.zeros((1, 1, 2, 2, 2))), Tensor(np.zeros((1, 1, 2, 2, 2))), stride=3)


class TestNormsAndActivations:
    """Normalisation layers, GELU, softmax and one-hot."""

    def test_layer_norm_zero_mean_unit_variance(self):
        x = Tensor(np.random.default_rng(1).normal(3.0, 2.0, size=(5, 16)))
        out = F.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)))
        np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.data.std(axis=-1), 1.0, atol=1e-3)

    def test_instance_norm_per_channel(self):
        x = Tensor(np.random.default_rng(2).normal(size=(2, 3, 4, 4, 4)) * 5.0 + 1.0)
        out = F.instance_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data.mean(axis=(2, 3, 4)), 0.0, atol=1e-5)

    def test_layer_norm_gamma_shape_checked(self):
        with pytest.raises(ShapeError):
            F.layer_norm(Tensor(np.zeros((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(3)))

    def test_gelu_known_values(self):
        out = F.gelu(Tensor([0.0, 1.0, -1.0]))
        np.testing.assert_allclose(out.data, [0.0, 0.841192, -0.158808], atol=1e-5)

    def test_softmax_sums_to_one_and_is_shift_stable(self):
        out = F.softmax(Tensor([[1000.0, 1001.0, 1002.0]]), axis=-1)
        np.testing.assert_allclose(out.data.sum(), 1.0, atol=1e-6)
        assert np.all(np.isfinite(out.data))

    def test_one_hot_moves_class_axis(self):
        encoded = F.one_hot(np.array([[0, 2], [1, 3]]), 4, axis=1)
        assert encoded.shape == (2, 4, 2)
        assert encoded[0, 2, 1] == 1.0 and encoded.sum() == 4.0

    def test_linear_weight_layout(self):
        out = F.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 5))), Tensor(np.arange(5.0)))
        np.testing.assert_allclose(out.data[0], [3, 4, 5, 6, 7])


class _Pair(Module):
    def __init__(self):
        self.first = Linear(3, 4)
        self.second = Conv3d(4, 2, kernel_size=3, padding=1)
        self._scratch = Linear(2, 2)


class TestModule:
    """Parameter discovery, initialisation and state dicts."""

    def test_named_parameters_in_definition_order(self):
        names = [name for name, _ in _Pair().named_parameters()]
        assert names == ["first.weight", "first.bias", "second.weight", "second.bias"]

    def test_private_attributes_are_skipped(self):
        assert _Pair().get_parameter("_scratch.weight") is None

    def test_parameter_count(self):
        assert _Pair().parameter_count() == 3 * 4 + 4 + 2 * 4 * 27 + 2

    def test_initialize_is_seeded(self):
        a = _Pair().initialize(5).state_dict()
        b = _Pair().initialize(5).state_dict()
        c = _Pair().initialize(6).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a["first.weight"], c["first.weight"])

    def test_truncated_normal_stays_within_two_std(self):
        weight = Linear(64, 64, std=0.02).initialize(0).weight.data
        assert np.abs(weight).max() <= 0.04 + 1e-7

    def test_load_state_dict_round_trip(self):
        source = _Pair().initialize(1)
        target = _Pair().initialize(2)
        target.load_state_dict(source.state_dict())
        np.testing.assert_array_equal(target.first.weight.data, source.first.weight.data)

    def test_load_state_dict_missing_key(self):
        state = _Pair().initialize(0).state_dict()
        del state["first.bias"]
        with pytest.raises(ConfigError):
            _Pair().load_state_dict(state)

    def test_load_state_dict_wrong_shape(self):
        state = _Pair().initialize(0).state_dict()
        state["first.bias"] = np.zeros(5)
        with pytest.raises(ShapeError):
            _Pair().load_state_dict(state)
