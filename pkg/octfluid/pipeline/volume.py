"""
OCT volumes, label volumes and the ``.svol`` file format.

In memory both are ``(H, W, C_scans)`` arrays, matching the on-disk order:
``H`` is the axial (A-scan) direction, ``W`` the lateral direction and
``C_scans`` counts B-scans. Intensities are float32 in ``[0, 1]``; on disk
they are u8 (``round(v * 255)``).

File layout (little endian)::

    b"SVOL" | u16 version=1 | u8 dtype (0 intensity, 1 labels) | u8 rank=3
    | u32 H | u32 W | u32 C_scans | u8 vendor | raw u8 voxels, row-major
"""

import logging
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
from scipy.ndimage import zoom

from octfluid.helpers.constants import (
    CLASS_NAMES,
    PIPELINE_DEFAULTS,
    VOLUME_DTYPE_INTENSITY,
    VOLUME_DTYPE_LABELS,
    VOLUME_MAGIC,
    VOLUME_MAX_DIM,
    VOLUME_VERSION,
)
from octfluid.helpers.errors import FormatError, ShapeError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sHBB3IB")


class Vendor(IntEnum):
    SPECTRALIS = 0
    CIRRUS = 1
    TOPCON = 2
    SYNTHETIC = 3


@dataclass
class Volume:
    voxels: np.ndarray
    vendor: Vendor = Vendor.SYNTHETIC

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 3:
            raise ShapeError(f"volume must be (H, W, C_scans), got {self.voxels.shape}")
        self.vendor = Vendor(self.vendor)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.voxels.shape

    @property
    def depth(self) -> int:
        return self.voxels.shape[2]

    def depth_first(self) -> np.ndarray:
        """``(C_scans, H, W)`` view used by the network."""
        return np.transpose(self.voxels, (2, 0, 1))


@dataclass
class LabelVolume:
    classes: np.ndarray
    vendor: Vendor = Vendor.SYNTHETIC

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.uint8)
        if self.classes.ndim != 3:
            raise ShapeError(f"label volume must be (H, W, C_scans), got {self.classes.shape}")
        if self.classes.size and self.classes.max() >= len(CLASS_NAMES):
            raise FormatError(f"label values must be < {len(CLASS_NAMES)}, found {self.classes.max()}")
        self.vendor = Vendor(self.vendor)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.classes.shape

    @property
    def depth(self) -> int:
        return self.classes.shape[2]

    def depth_first(self) -> np.ndarray:
        return np.transpose(self.classes, (2, 0, 1))

    def class_counts(self) -> Dict[str, int]:
        """Voxel count per class name, background included."""
        counts = np.bincount(self.classes.reshape(-1), minlength=len(CLASS_NAMES))
        return {name: int(counts[index]) for index, name in CLASS_NAMES.items()}

    @classmethod
    def from_depth_first(cls, classes: np.ndarray, vendor: Vendor = Vendor.SYNTHETIC) -> "LabelVolume":
        return cls(np.transpose(classes, (1, 2, 0)), vendor)


# =============================================================================
# File I/O
# =============================================================================


def write_volume(volume: Union[Volume, LabelVolume], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(volume, LabelVolume):
        dtype_code = VOLUME_DTYPE_LABELS
        payload = np.ascontiguousarray(volume.classes, dtype=np.uint8)
    else:
        dtype_code = VOLUME_DTYPE_INTENSITY
        payload = np.round(np.clip(volume.voxels, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = _HEADER.pack(VOLUME_MAGIC, VOLUME_VERSION, dtype_code, 3, *payload.shape, int(volume.vendor))
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(payload.tobytes(order="C"))


def read_volume(path: Union[str, Path]) -> Union[Volume, LabelVolume]:
    """Read an ``.svol`` file into a :class:`Volume` or :class:`LabelVolume`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Volume file not found: {path}")
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a volume header")
    magic, version, dtype_code, rank, h, w, c, vendor = _HEADER.unpack_from(data)
    if magic != VOLUME_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VOLUME_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if rank != 3:
        raise FormatError(f"{path}: expected rank 3, got {rank}")
    dims = (h, w, c)
    if min(dims) < 1 or max(dims) > VOLUME_MAX_DIM:
        raise FormatError(f"{path}: dims {dims} out of range")
    expected = h * w * c
    raw = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if raw.size != expected:
        raise FormatError(f"{path}: header dims {dims} need {expected} voxels, file holds {raw.size}")
    try:
        vendor = Vendor(vendor)
    except ValueError:
        raise FormatError(f"{path}: unknown vendor code {vendor}")
    raw = raw.reshape(dims)
    if dtype_code == VOLUME_DTYPE_INTENSITY:
        return Volume(raw.astype(np.float32) / 255.0, vendor)
    if dtype_code == VOLUME_DTYPE_LABELS:
        return LabelVolume(raw.copy(), vendor)
    raise FormatError(f"{path}: unknown dtype code {dtype_code}")


def read_pair(image_path: Union[str, Path], label_path: Union[str, Path]) -> Tuple[Volume, LabelVolume]:
    image, labels = read_volume(image_path), read_volume(label_path)
    if not isinstance(image, Volume) or not isinstance(labels, LabelVolume):
        raise FormatError(f"expected an intensity/label pair, got {image_path} and {label_path}")
    if image.dims != labels.dims:
        raise ShapeError(f"{image_path} {image.dims} and {label_path} {labels.dims} differ in shape")
    return image, labels


# =============================================================================
# Resizing
# =============================================================================


def resize_inplane(
    volume: Union[Volume, LabelVolume],
    size: Tuple[int, int] = PIPELINE_DEFAULTS["inplane_size"],
    order: int = None,
) -> Union[Volume, LabelVolume]:
    """Resize ``H x W`` of every B-scan, keeping the B-scan count.

    ``order`` 1 is (tri)linear and 0 nearest; the default depends on the
    volume kind (linear for intensities, nearest for labels).
    """
    is_labels = isinstance(volume, LabelVolume)
    if order is None:
        order = PIPELINE_DEFAULTS["label_order"] if is_labels else PIPELINE_DEFAULTS["image_order"]
    array = volume.classes if is_labels else volume.voxels
    h, w, _ = array.shape
    if (h, w) == tuple(size):
        return volume
    factors = (size[0] / h, size[1] / w, 1.0)
    resized = zoom(array, factors, order=order, mode="nearest", grid_mode=True)
    resized = resized[: size[0], : size[1]]
    logger.debug("Resized %s -> %s (order %d)", array.shape, resized.shape, order)
    if is_labels:
        return LabelVolume(resized.astype(np.uint8), volume.vendor)
    return Volume(np.clip(resized, 0.0, 1.0), volume.vendor)
