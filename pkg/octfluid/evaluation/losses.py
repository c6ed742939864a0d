"""Soft multi-class dice loss built from differentiable tensor primitives."""

from typing import Union

import numpy as np

from octfluid.autodiff.functional import one_hot
from octfluid.autodiff.tensor import Tensor, as_tensor
from octfluid.helpers.constants import TRAIN_DEFAULTS
from octfluid.helpers.errors import ShapeError

Target = Union[np.ndarray, Tensor]


def _as_onehot(pred: Tensor, target: Target) -> Tensor:
    if isinstance(target, Tensor):
        target = target.data
    target = np.asarray(target)
    if target.ndim == pred.ndim - 1 and np.issubdtype(target.dtype, np.integer):
        target = one_hot(target, pred.shape[1], axis=1)
    if target.shape != pred.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    return Tensor(target)


def dice_loss_per_class(pred_probs: Tensor, target: Target, eps: float = TRAIN_DEFAULTS["dice_eps"]) -> Tensor:
    """``1 - (2 sum(p*y) + eps) / (sum(p) + sum(y) + eps)`` per class, summed over batch and voxels.

    ``target`` is a one-hot array shaped like ``pred_probs`` or integer labels
    without the class axis.
    """
    pred_probs = as_tensor(pred_probs)
    if pred_probs.ndim < 2:
        raise ShapeError(f"dice loss needs [N, K, ...] probabilities, got {pred_probs.shape}")
    target = _as_onehot(pred_probs, target)
    axes = (0,) + tuple(range(2, pred_probs.ndim))
    intersection = (pred_probs * target).sum(axis=axes)
    pred_mass = pred_probs.sum(axis=axes)
    target_mass = target.data.sum(axis=axes)
    return 1.0 - (intersection * 2.0 + eps) / (pred_mass + (target_mass + eps))


def dice_loss(pred_probs: Tensor, target: Target, eps: float = TRAIN_DEFAULTS["dice_eps"]) -> Tensor:
    """Mean of :func:`dice_loss_per_class` over all classes, background included."""
    return dice_loss_per_class(pred_probs, target, eps).mean()
