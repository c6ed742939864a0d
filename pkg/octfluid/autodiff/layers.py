"""Parameterised layers built on the functional ops."""

import math

from octfluid.autodiff import functional as F
from octfluid.autodiff.module import Module, Parameter, TruncNormal, ZEROS, ONES
from octfluid.autodiff.tensor import Tensor
from octfluid.helpers.constants import MODEL_DEFAULTS, NORM_EPS


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True, std: float = MODEL_DEFAULTS["init_std"]):
        self.weight = Parameter((in_features, out_features), TruncNormal(std))
        self.bias = Parameter((out_features,), ZEROS) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv3d(Module):
    """3D convolution; weights start from a truncated normal scaled by fan-in."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size=1,
        padding=0,
        dilation=1,
        groups: int = 1,
        bias: bool = True,
        stride=1,
    ):
        kernel = F._triple(kernel_size)
        fan_in = (in_channels // groups) * kernel[0] * kernel[1] * kernel[2]
        self.weight = Parameter((out_channels, in_channels // groups) + kernel, TruncNormal(math.sqrt(2.0 / fan_in)))
        self.bias = Parameter((out_channels,), ZEROS) if bias else None
        self._padding = padding
        self._dilation = dilation
        self._groups = groups
        self._stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3d(
            x, self.weight, self.bias,
            stride=self._stride, padding=self._padding, dilation=self._dilation, groups=self._groups,
        )


class ConvTranspose3d(Module):
    """Doubling transposed convolution (kernel 2, stride 2)."""

    def __init__(self, in_channels: int, out_channels: int, bias: bool = True):
        self.weight = Parameter((in_channels, out_channels, 2, 2, 2), TruncNormal(math.sqrt(2.0 / (in_channels * 8))))
        self.bias = Parameter((out_channels,), ZEROS) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose3d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = NORM_EPS):
        self.weight = Parameter((channels,), ONES)
        self.bias = Parameter((channels,), ZEROS)
        self._eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, self._eps)


class InstanceNorm3d(Module):
    def __init__(self, channels: int, eps: float = NORM_EPS):
        self.weight = Parameter((channels,), ONES)
        self.bias = Parameter((channels,), ZEROS)
        self._eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.instance_norm(x, self.weight, self.bias, self._eps)
