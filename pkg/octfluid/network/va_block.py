"""Skip-connection blocks: volumetric attention and the residual-conv alternative."""

from octfluid.autodiff import functional as F
from octfluid.autodiff.layers import Conv3d, InstanceNorm3d
from octfluid.autodiff.module import Module
from octfluid.autodiff.tensor import Tensor
from octfluid.helpers.errors import ShapeError


class VolumetricAttention(Module):
    """Spatial branch + channel branch + identity, summed without gating.

    ``out = conv1(conv3(x)) + pointwise(depthwise(x)) + x``
    """

    def __init__(self, channels: int):
        self.spatial_conv3 = Conv3d(channels, channels, kernel_size=3, padding=1)
        self.spatial_conv1 = Conv3d(channels, channels, kernel_size=1)
        self.dw_conv = Conv3d(channels, channels, kernel_size=1, groups=channels)
        self.pw_conv = Conv3d(channels, channels, kernel_size=1)
        self._channels = channels

    def spatial_branch(self, x: Tensor) -> Tensor:
        return self.spatial_conv1(self.spatial_conv3(x))

    def channel_branch(self, x: Tensor) -> Tensor:
        return self.pw_conv(self.dw_conv(x))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[1] != self._channels:
            raise ShapeError(f"VA block built for {self._channels} channels, got input {x.shape}")
        return self.spatial_branch(x) + self.channel_branch(x) + x


def va_forward(x: Tensor, block: VolumetricAttention) -> Tensor:
    return block(x)


class ResidualConvBlock(Module):
    """Two 3x3x3 convolutions with instance norm and a residual path.

    ``out = gelu(IN(conv(gelu(IN(conv(x))))) + r)`` where ``r`` is ``x`` or a
    1x1x1 projection of it when the channel count changes.
    """

    def __init__(self, in_channels: int, out_channels: int):
        self.conv1 = Conv3d(in_channels, out_channels, kernel_size=3, padding=1, bias=False)
        self.norm1 = InstanceNorm3d(out_channels)
        self.conv2 = Conv3d(out_channels, out_channels, kernel_size=3, padding=1, bias=False)
        self.norm2 = InstanceNorm3d(out_channels)
        if in_channels != out_channels:
            self.shortcut = Conv3d(in_channels, out_channels, kernel_size=1, bias=False)
            self.shortcut_norm = InstanceNorm3d(out_channels)
        else:
            self.shortcut = None
            self.shortcut_norm = None
        self._in_channels = in_channels

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[1] != self._in_channels:
            raise ShapeError(f"residual block built for {self._in_channels} channels, got input {x.shape}")
        h = F.gelu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        residual = x if self.shortcut is None else self.shortcut_norm(self.shortcut(x))
        return F.gelu(h + residual)
