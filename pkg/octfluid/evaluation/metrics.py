"""
Hard segmentation metrics on label volumes.

Dice and IoU use the both-empty convention: a class absent from both the
prediction and the reference scores 1. SSIM is not defined for label maps, so
it is computed per foreground class on the binary masks and averaged.
"""

import logging
from typing import Iterable, Optional, Sequence

import numpy as np
from skimage.metrics import structural_similarity

from octfluid.helpers.constants import CLASS_NAMES, FOREGROUND_CLASSES, METRIC_DEFAULTS
from octfluid.helpers.errors import ClassError, ShapeError

logger = logging.getLogger(__name__)


def _check_pair(pred: np.ndarray, target: np.ndarray):
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    return pred, target


def _check_class(class_id: int, num_classes: int) -> None:
    if not 0 <= int(class_id) < num_classes:
        raise ClassError(f"unknown class id {class_id} (expected 0..{num_classes - 1})")


def dice_score(pred_labels, target_labels, class_id: int, num_classes: int = len(CLASS_NAMES)) -> float:
    """``2|A ∩ B| / (|A| + |B|)`` for the voxels labelled ``class_id``."""
    _check_class(class_id, num_classes)
    pred, target = _check_pair(pred_labels, target_labels)
    a = pred == class_id
    b = target == class_id
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def iou_score(pred_labels, target_labels, class_id: int, num_classes: int = len(CLASS_NAMES)) -> float:
    _check_class(class_id, num_classes)
    pred, target = _check_pair(pred_labels, target_labels)
    a = pred == class_id
    b = target == class_id
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def mean_iou(pred_labels, target_labels, classes: Optional[Iterable[int]] = None) -> float:
    """IoU averaged over ``classes`` (all classes, background included, by default)."""
    classes = list(CLASS_NAMES) if classes is None else list(classes)
    return float(np.mean([iou_score(pred_labels, target_labels, c) for c in classes]))


def mean_dice(pred_labels, target_labels, classes: Optional[Iterable[int]] = None) -> float:
    classes = list(CLASS_NAMES) if classes is None else list(classes)
    return float(np.mean([dice_score(pred_labels, target_labels, c) for c in classes]))


# =============================================================================
# SSIM
# =============================================================================


def _global_ssim(a: np.ndarray, b: np.ndarray, c1: float, c2: float) -> float:
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    return float(
        ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
        / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    )


def ssim_3d(
    pred_map,
    target_map,
    window: int = METRIC_DEFAULTS["ssim_window"],
    k1: float = METRIC_DEFAULTS["ssim_k1"],
    k2: float = METRIC_DEFAULTS["ssim_k2"],
    data_range: float = METRIC_DEFAULTS["ssim_range"],
) -> float:
    """Mean SSIM over every ``window``-cubed block that fits inside the volume.

    Uses uniform weights and population (not sample) covariance. Volumes with
    any axis shorter than ``window`` fall back to one global window.
    """
    a, b = _check_pair(pred_map, target_map)
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    if min(a.shape) < window:
        logger.debug("Volume %s smaller than SSIM window %d; using global statistics", a.shape, window)
        return _global_ssim(a, b, c1, c2)
    return float(
        structural_similarity(
            a,
            b,
            win_size=window,
            gaussian_weights=False,
            use_sample_covariance=False,
            data_range=data_range,
            K1=k1,
            K2=k2,
        )
    )


def class_ssim(pred_labels, target_labels, classes: Sequence[int] = FOREGROUND_CLASSES, **kwargs) -> float:
    """SSIM of the binary masks of each class in ``classes``, averaged."""
    pred, target = _check_pair(pred_labels, target_labels)
    scores = []
    for class_id in classes:
        _check_class(class_id, len(CLASS_NAMES))
        scores.append(ssim_3d(pred == class_id, target == class_id, **kwargs))
    return float(np.mean(scores))
