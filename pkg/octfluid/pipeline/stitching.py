"""
Overlapped depth-crop inference and stitching.

A volume is cut into the crops of a :class:`~octfluid.helpers.planner.CropPlan`,
each crop is run through the network, and the per-crop outputs are summed into
a full-depth buffer together with a per-slice coverage count. Finalising
divides by the count and takes the per-voxel argmax.

Two blend modes exist: ``mean_probs`` averages softmax probabilities and
``mean_logits`` averages pre-softmax scores and applies softmax once.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from tqdm import tqdm

from octfluid.autodiff.tensor import Tensor, no_grad
from octfluid.helpers.constants import DOWNSAMPLE_FACTOR, PIPELINE_DEFAULTS
from octfluid.helpers.errors import ConfigError, CoverageError, ShapeError
from octfluid.helpers.planner import CropInterval, plan_inference_crops
from octfluid.pipeline.sampling import depth_padding, pad_inplane
from octfluid.pipeline.volume import LabelVolume, Vendor, Volume

logger = logging.getLogger(__name__)

BLEND_MODES = ("mean_probs", "mean_logits")


def _softmax(values: np.ndarray, axis: int = 0) -> np.ndarray:
    shifted = values - values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class StitchAccumulator:
    """Running sums for one volume.

    Attributes:
        totals: ``float64[K, depth, H, W]`` sum of crop outputs
        counts: ``int[depth]`` number of crops that covered each slice
    """

    def __init__(self, num_classes: int, depth: int, height: int, width: int,
                 blend: str = PIPELINE_DEFAULTS["blend"]):
        if blend not in BLEND_MODES:
            raise ConfigError(f"blend must be one of {BLEND_MODES}, got {blend!r}")
        self.blend = blend
        self.totals = np.zeros((num_classes, depth, height, width), dtype=np.float64)
        self.counts = np.zeros(depth, dtype=np.int64)

    @property
    def shape(self):
        return self.totals.shape

    def add(self, crop_values: np.ndarray, interval: CropInterval) -> None:
        crop_values = np.asarray(crop_values)
        expected = (self.totals.shape[0], interval.depth) + self.totals.shape[2:]
        if crop_values.shape != expected:
            raise ShapeError(f"crop output {crop_values.shape} does not match {expected}")
        if interval.start < 0 or interval.stop > self.totals.shape[1]:
            raise ShapeError(f"{interval} lies outside depth {self.totals.shape[1]}")
        self.totals[:, interval.start:interval.stop] += crop_values
        self.counts[interval.start:interval.stop] += 1

    def probabilities(self) -> np.ndarray:
        """Averaged class probabilities, ``[K, depth, H, W]``."""
        uncovered = np.flatnonzero(self.counts == 0)
        if uncovered.size:
            raise CoverageError(f"slices {uncovered.tolist()[:10]} were never covered by a crop")
        mean = self.totals / self.counts[None, :, None, None]
        if self.blend == "mean_logits":
            return _softmax(mean, axis=0)
        return mean


def stitch(acc: StitchAccumulator, crop_probs: np.ndarray, interval: CropInterval) -> None:
    acc.add(crop_probs, interval)


def finalize(acc: StitchAccumulator, keep: Optional[slice] = None) -> LabelVolume:
    """Argmax labels (ties go to the lowest class index); ``keep`` trims depth padding."""
    probs = acc.probabilities()
    if keep is not None:
        probs = probs[:, keep]
    classes = np.argmax(probs, axis=0).astype(np.uint8)
    return LabelVolume.from_depth_first(classes)


@dataclass
class Prediction:
    labels: LabelVolume
    probabilities: np.ndarray  # [K, C_scans, H, W]


def predict_volume(
    model,
    volume: Union[Volume, np.ndarray],
    crop_depth: int = PIPELINE_DEFAULTS["crop_depth"],
    overlap: float = PIPELINE_DEFAULTS["overlap"],
    blend: str = PIPELINE_DEFAULTS["blend"],
    multiple: int = DOWNSAMPLE_FACTOR,
    progress: bool = False,
    forward: Optional[Callable[[Tensor], Tensor]] = None,
) -> Prediction:
    """Plan crops, run the model on each, stitch, and return labels at input size.

    ``forward`` overrides the per-crop call (default ``model`` for probability
    blending and ``model.logits`` for logit blending).
    """
    if blend not in BLEND_MODES:
        raise ConfigError(f"blend must be one of {BLEND_MODES}, got {blend!r}")
    voxels = volume.depth_first() if isinstance(volume, Volume) else np.asarray(volume, dtype=np.float32)
    num_scans, height, width = voxels.shape
    before, after = depth_padding(num_scans, crop_depth)
    if before or after:
        voxels = np.pad(voxels, ((before, after), (0, 0), (0, 0)), mode="edge")
    voxels = pad_inplane(voxels, multiple, mode="edge")

    if forward is None:
        forward = model.logits if blend == "mean_logits" else model
    plan = plan_inference_crops(num_scans, crop_depth, overlap)
    acc = None
    with no_grad():
        for interval in tqdm(plan, desc="crops", disable=not progress, leave=False):
            crop = Tensor(voxels[None, None, interval.start:interval.stop])
            out = forward(crop).numpy()[0]
            if acc is None:
                acc = StitchAccumulator(out.shape[0], plan.padded_depth, out.shape[2], out.shape[3], blend)
            stitch(acc, out, interval)
    logger.debug("Stitched %d crops over depth %d", len(plan), plan.padded_depth)

    keep = slice(before, before + num_scans)
    probs = acc.probabilities()[:, keep, :height, :width]
    classes = np.argmax(probs, axis=0).astype(np.uint8)
    vendor = volume.vendor if isinstance(volume, Volume) else Vendor.SYNTHETIC
    return Prediction(LabelVolume.from_depth_first(classes, vendor), probs.astype(np.float32))
