"""
Channel-wise training crops and intensity augmentation.

Crops run along the B-scan axis only: a training sample keeps the full
``H x W`` extent of every B-scan and takes ``D`` consecutive B-scans starting
at a uniformly drawn index. Volumes with fewer than ``D`` B-scans are
edge-padded symmetrically and the padded slices are flagged in ``real_slices``.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from octfluid.autodiff.tensor import Tensor
from octfluid.helpers.constants import DOWNSAMPLE_FACTOR, TRAIN_DEFAULTS
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.pipeline.volume import LabelVolume, Volume

logger = logging.getLogger(__name__)

ArrayOrVolume = Union[np.ndarray, Volume]


@dataclass
class TrainingCrop:
    """One network-ready sample.

    Attributes:
        image: ``Tensor[1, 1, D, H', W']`` with ``H', W'`` padded to the model multiple
        labels: ``uint8[1, D, H', W']``
        start: first B-scan index in the source volume
        real_slices: ``bool[D]``, False for depth padding
        spatial: original ``(H, W)`` before in-plane padding
    """

    image: Tensor
    labels: np.ndarray
    start: int
    real_slices: np.ndarray
    spatial: Tuple[int, int]

    def __iter__(self):
        yield self.image
        yield self.labels


def depth_padding(num_scans: int, depth: int) -> Tuple[int, int]:
    """Symmetric ``(before, after)`` padding that brings ``num_scans`` up to ``depth``."""
    missing = max(0, depth - num_scans)
    return missing // 2, missing - missing // 2


def pad_inplane(array: np.ndarray, multiple: int = DOWNSAMPLE_FACTOR, mode: str = "edge") -> np.ndarray:
    """Pad the last two axes of ``array`` up to multiples of ``multiple`` (at the end)."""
    widths = [(0, 0)] * (array.ndim - 2)
    widths += [(0, (-size) % multiple) for size in array.shape[-2:]]
    if all(after == 0 for _, after in widths):
        return array
    if mode == "constant":
        return np.pad(array, widths, mode="constant", constant_values=0)
    return np.pad(array, widths, mode=mode)


def sample_training_crop(
    volume: Volume,
    labels: LabelVolume,
    depth: int = TRAIN_DEFAULTS["crop_depth"],
    rng: Optional[np.random.Generator] = None,
    multiple: int = DOWNSAMPLE_FACTOR,
) -> TrainingCrop:
    """Draw one ``D``-deep crop with a start uniform in ``[0, C_scans - D]``."""
    if volume.dims != labels.dims:
        raise ShapeError(f"volume {volume.dims} and labels {labels.dims} differ in shape")
    if depth < 1:
        raise ConfigError(f"crop depth must be >= 1, got {depth}")
    rng = rng if rng is not None else np.random.default_rng()

    voxels = volume.depth_first()
    classes = labels.depth_first()
    num_scans = voxels.shape[0]
    if num_scans >= depth:
        start = int(rng.integers(0, num_scans - depth + 1))
        image = voxels[start:start + depth]
        target = classes[start:start + depth]
        real = np.ones(depth, dtype=bool)
    else:
        before, after = depth_padding(num_scans, depth)
        start = 0
        image = np.pad(voxels, ((before, after), (0, 0), (0, 0)), mode="edge")
        target = np.pad(classes, ((before, after), (0, 0), (0, 0)), mode="edge")
        real = np.zeros(depth, dtype=bool)
        real[before:before + num_scans] = True

    spatial = image.shape[1:]
    image = pad_inplane(image, multiple, mode="edge")
    target = pad_inplane(target, multiple, mode="constant")
    return TrainingCrop(
        image=Tensor(image[None, None]),
        labels=target[None].astype(np.uint8),
        start=start,
        real_slices=real,
        spatial=tuple(spatial),
    )


# =============================================================================
# Augmentation
# =============================================================================


def intensity_shift(voxels: np.ndarray, shift: float) -> np.ndarray:
    """Add ``shift`` to every voxel and clamp to ``[0, 1]``."""
    return np.clip(np.asarray(voxels, dtype=np.float32) + np.float32(shift), 0.0, 1.0)


def augment(
    volume: ArrayOrVolume,
    labels,
    rng: np.random.Generator,
    prob: float = TRAIN_DEFAULTS["shift_prob"],
    max_shift: float = TRAIN_DEFAULTS["max_shift"],
):
    """Random intensity shift of up to ``max_shift`` grey levels (out of 255).

    With probability ``prob`` a shift drawn uniformly from
    ``[-max_shift, max_shift] / 255`` is added and the result clamped. Labels
    are returned untouched. Works on a :class:`Volume` or a raw array.
    """
    if not rng.random() < prob:
        return volume, labels
    shift = rng.uniform(-max_shift, max_shift) / 255.0
    if isinstance(volume, Volume):
        return Volume(intensity_shift(volume.voxels, shift), volume.vendor), labels
    return intensity_shift(volume, shift), labels
