"""
Planning helpers: depth-axis crop plans for sliding-window inference and
dataset manifests.

A crop plan lists ``[start, start + D)`` intervals along the B-scan axis.
Consecutive starts are ``D * (1 - overlap)`` apart and the last interval is
end-aligned with the volume, so every slice is covered and no interval runs
past the data. Volumes shorter than ``D`` get one interval over the
edge-padded depth.
"""

import csv
import os
from pathlib import Path
from typing import Iterator, List, Tuple, Union

from octfluid.helpers.constants import PIPELINE_DEFAULTS
from octfluid.helpers.errors import ConfigError, ShapeError


class CropInterval:
    """One depth window ``[start, stop)`` of a crop plan."""

    def __init__(self, start: int, depth: int):
        self.start = start
        self.depth = depth

    @property
    def stop(self) -> int:
        return self.start + self.depth

    def to_dict(self):
        return {"start": self.start, "stop": self.stop}

    def __eq__(self, other):
        return isinstance(other, CropInterval) and (self.start, self.depth) == (other.start, other.depth)

    def __repr__(self):
        return f"CropInterval({self.start}, {self.stop})"


class CropPlan:
    """Depth crops covering a volume with ``C_scans`` B-scans.

    Attributes:
        num_scans: real B-scan count of the volume
        crop_depth: crop length ``D``
        overlap: overlap fraction between consecutive crops
        intervals: crop windows, in increasing start order
    """

    def __init__(self, num_scans: int, crop_depth: int = PIPELINE_DEFAULTS["crop_depth"],
                 overlap: float = PIPELINE_DEFAULTS["overlap"]):
        if num_scans < 1:
            raise ShapeError(f"a crop plan needs at least one B-scan, got {num_scans}")
        if crop_depth < 1:
            raise ConfigError(f"crop depth must be >= 1, got {crop_depth}")
        if not 0.0 <= overlap < 1.0:
            raise ConfigError(f"overlap must lie in [0, 1), got {overlap}")
        self.num_scans = num_scans
        self.crop_depth = crop_depth
        self.overlap = overlap
        self.intervals: List[CropInterval] = []

    @property
    def stride(self) -> int:
        return max(1, int(round(self.crop_depth * (1.0 - self.overlap))))

    @property
    def padded_depth(self) -> int:
        """Depth after edge-padding short volumes up to one crop."""
        return max(self.num_scans, self.crop_depth)

    @property
    def starts(self) -> List[int]:
        return [interval.start for interval in self.intervals]

    def build(self) -> "CropPlan":
        self.intervals = []
        last = self.padded_depth - self.crop_depth
        starts = list(range(0, last + 1, self.stride))
        if starts[-1] != last:
            starts.append(last)
        self.intervals = [CropInterval(start, self.crop_depth) for start in starts]
        return self

    def coverage(self) -> List[int]:
        """Number of crops touching each padded slice."""
        counts = [0] * self.padded_depth
        for interval in self.intervals:
            for index in range(interval.start, interval.stop):
                counts[index] += 1
        return counts

    def __len__(self):
        return len(self.intervals)

    def __iter__(self) -> Iterator[CropInterval]:
        return iter(self.intervals)

    def write_summary_csv(self, output_dir: str, filename: str = "crops.csv"):
        """Write the plan's intervals as a CSV (one row per crop)."""
        if not self.intervals:
            return
        os.makedirs(output_dir, exist_ok=True)
        target_path = os.path.join(output_dir, filename)
        with open(target_path, mode="w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["index", "start", "stop"])
            writer.writeheader()
            for index, interval in enumerate(self.intervals):
                writer.writerow({"index": index, **interval.to_dict()})
        return target_path


def plan_inference_crops(num_scans: int, crop_depth: int = PIPELINE_DEFAULTS["crop_depth"],
                         overlap: float = PIPELINE_DEFAULTS["overlap"]) -> CropPlan:
    return CropPlan(num_scans, crop_depth, overlap).build()


# =============================================================================
# Manifests
# =============================================================================


def load_manifest(manifest_path: Union[str, Path]) -> List[Tuple[Path, Path]]:
    """
    Load ``image_path<TAB>label_path`` pairs.

    Relative paths are resolved against the manifest's directory; blank lines
    and ``#`` comments are skipped.

    Returns:
        List of (image_path, label_path) tuples.
    """
    path = Path(manifest_path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    pairs = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter="\t")
        for lineno, row in enumerate(reader, start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'image<TAB>label', got {row}")
            image, label = (Path(part.strip()) for part in row)
            pairs.append((
                image if image.is_absolute() else path.parent / image,
                label if label.is_absolute() else path.parent / label,
            ))
    if not pairs:
        raise ConfigError(f"{path}: manifest lists no volumes")
    return pairs


def write_manifest(manifest_path: Union[str, Path], pairs: List[Tuple[str, str]]) -> None:
    path = Path(manifest_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, mode="w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        for image, label in pairs:
            writer.writerow([str(image), str(label)])
