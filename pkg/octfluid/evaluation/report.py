"""
Metrics reports for one volume or a set of volumes, and their text/CSV output.

``report.txt`` holds ``key = value`` lines for the set average; the CSV next
to it has one row per volume followed by a ``mean`` row.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from octfluid.helpers.constants import CLASS_NAMES, FOREGROUND_CLASSES
from octfluid.helpers.errors import ShapeError
from octfluid.helpers.summary_writer import SummaryWriter
from octfluid.evaluation.metrics import class_ssim, dice_score, mean_iou
from octfluid.pipeline.volume import LabelVolume

logger = logging.getLogger(__name__)

REPORT_FIELDS = (
    "dice_irf",
    "dice_srf",
    "dice_ped",
    "dice_bg",
    "mean_dice_wo_bg",
    "mean_dice_w_bg",
    "mean_iou",
    "mean_iou_wo_bg",
    "ssim",
)


@dataclass
class MetricsReport:
    """Table-style scores for one volume (or an average over volumes)."""

    dice: Dict[int, float]
    dice_bg: float
    mean_iou: float
    mean_iou_wo_bg: float
    ssim: float
    name: str = ""
    volumes: int = 1
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def mean_dice_wo_bg(self) -> float:
        return float(np.mean([self.dice[c] for c in FOREGROUND_CLASSES]))

    @property
    def mean_dice_w_bg(self) -> float:
        return float(np.mean([self.dice_bg] + [self.dice[c] for c in FOREGROUND_CLASSES]))

    def to_dict(self) -> Dict[str, float]:
        values = {f"dice_{CLASS_NAMES[c].lower()}": self.dice[c] for c in FOREGROUND_CLASSES}
        values.update(
            dice_bg=self.dice_bg,
            mean_dice_wo_bg=self.mean_dice_wo_bg,
            mean_dice_w_bg=self.mean_dice_w_bg,
            mean_iou=self.mean_iou,
            mean_iou_wo_bg=self.mean_iou_wo_bg,
            ssim=self.ssim,
        )
        values.update(self.extras)
        return values

    def to_text(self) -> str:
        lines = [f"volumes = {self.volumes}"]
        lines += [f"{key} = {value:.6f}" for key, value in self.to_dict().items()]
        return "\n".join(lines) + "\n"


def evaluate_volume(pred: LabelVolume, target: LabelVolume, name: str = "") -> MetricsReport:
    """Score one predicted label volume against its reference."""
    pred_classes = pred.classes if isinstance(pred, LabelVolume) else np.asarray(pred)
    target_classes = target.classes if isinstance(target, LabelVolume) else np.asarray(target)
    if pred_classes.shape != target_classes.shape:
        raise ShapeError(f"{name or 'volume'}: prediction {pred_classes.shape} vs target {target_classes.shape}")
    dice = {c: dice_score(pred_classes, target_classes, c) for c in FOREGROUND_CLASSES}
    # binary-mask SSIM can dip below zero on anti-correlated masks
    ssim = min(1.0, max(0.0, class_ssim(pred_classes, target_classes)))
    return MetricsReport(
        dice=dice,
        dice_bg=dice_score(pred_classes, target_classes, 0),
        mean_iou=mean_iou(pred_classes, target_classes),
        mean_iou_wo_bg=mean_iou(pred_classes, target_classes, FOREGROUND_CLASSES),
        ssim=ssim,
        name=name,
    )


def aggregate(reports: Sequence[MetricsReport], name: str = "mean") -> MetricsReport:
    """Per-volume scores averaged over volumes (not pooled voxels)."""
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")

    def avg(values):
        return float(np.mean(list(values)))

    return MetricsReport(
        dice={c: avg(r.dice[c] for r in reports) for c in FOREGROUND_CLASSES},
        dice_bg=avg(r.dice_bg for r in reports),
        mean_iou=avg(r.mean_iou for r in reports),
        mean_iou_wo_bg=avg(r.mean_iou_wo_bg for r in reports),
        ssim=avg(r.ssim for r in reports),
        name=name,
        volumes=len(reports),
    )


def write_report(reports: Sequence[MetricsReport], report_path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``report_path`` (key = value) and a sibling ``.csv`` with per-volume rows."""
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    summary = aggregate(reports)
    report_path.write_text(summary.to_text(), encoding="utf-8")

    writer = SummaryWriter(str(report_path.parent), columns=["name", *REPORT_FIELDS])
    rows: List[MetricsReport] = list(reports) + [summary]
    for report in rows:
        values = {key: report.to_dict()[key] for key in REPORT_FIELDS}
        writer.add(name=report.name, **values)
    csv_path = Path(writer.write_csv(report_path.with_suffix(".csv").name))
    logger.info("Wrote metrics for %d volumes to %s", len(reports), report_path)
    return report_path, csv_path
