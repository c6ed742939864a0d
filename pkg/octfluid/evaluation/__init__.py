"""Dice objective, segmentation metrics and metrics reports."""

from octfluid.evaluation.losses import dice_loss, dice_loss_per_class
from octfluid.evaluation.metrics import class_ssim, dice_score, iou_score, mean_dice, mean_iou, ssim_3d
from octfluid.evaluation.report import MetricsReport, aggregate, evaluate_volume, write_report

__all__ = [
    "dice_loss",
    "dice_loss_per_class",
    "class_ssim",
    "dice_score",
    "iou_score",
    "mean_dice",
    "mean_iou",
    "ssim_3d",
    "MetricsReport",
    "aggregate",
    "evaluate_volume",
    "write_report",
]
