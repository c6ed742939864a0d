"""Numpy tensors with reverse-mode autodiff, layers and gradient checking."""

from octfluid.autodiff.tensor import (
    Tensor,
    concat,
    detect_anomaly,
    no_grad,
    pad,
    precision,
    roll,
    stack,
    take,
)
from octfluid.autodiff.functional import (
    conv3d,
    conv_transpose3d,
    gelu,
    instance_norm,
    layer_norm,
    linear,
    one_hot,
    softmax,
)
from octfluid.autodiff.module import InitSpec, Module, Parameter, TruncNormal, ZEROS, ONES
from octfluid.autodiff.gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor",
    "concat",
    "detect_anomaly",
    "no_grad",
    "pad",
    "precision",
    "roll",
    "stack",
    "take",
    "conv3d",
    "conv_transpose3d",
    "gelu",
    "instance_norm",
    "layer_norm",
    "linear",
    "one_hot",
    "softmax",
    "InitSpec",
    "Module",
    "Parameter",
    "TruncNormal",
    "ZEROS",
    "ONES",
    "GradCheckReport",
    "grad_check",
]
