"""Synthetic OCT-like volumes with ellipsoidal fluid pockets and exact labels."""

import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from octfluid.helpers.base_generator import BaseGenerator
from octfluid.helpers.constants import FOREGROUND_CLASSES, SYNTH_DEFAULTS
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.helpers.planner import write_manifest
from octfluid.helpers.random_seed import make_rng
from octfluid.helpers.summary_writer import SummaryWriter
from octfluid.pipeline.volume import LabelVolume, Vendor, Volume

MIN_SYNTH_DIM = 16
MAX_BLOBS_PER_CLASS = 5


def draw_ellipsoid_mask(
    dims: Tuple[int, int, int],
    center: Sequence[float],
    semi_axes: Sequence[float],
) -> np.ndarray:
    """Boolean mask of voxels whose centres lie inside an axis-aligned ellipsoid."""
    grids = np.ogrid[tuple(slice(0, size) for size in dims)]
    distance = sum(((g - c) / a) ** 2 for g, c, a in zip(grids, center, semi_axes))
    return distance <= 1.0


def _retina_bands(dims: Tuple[int, int, int], bands, background: float) -> np.ndarray:
    h, w, c = dims
    voxels = np.full(dims, background, dtype=np.float64)
    rows = np.arange(h)[:, None]
    # gentle foveal dip across the lateral axis
    sag = 0.04 * h * np.sin(np.pi * (np.arange(w) + 0.5) / w)[None, :]
    for top, bottom, intensity in bands:
        inside = (rows >= top * h + sag) & (rows < bottom * h + sag)
        voxels[inside] = intensity
    return voxels


def _sample_blob(rng: np.random.Generator, dims: Tuple[int, int, int], min_axis: float):
    h, w, c = dims
    limits = (0.08 * h, 0.12 * w, 0.2 * c)
    semi_axes = tuple(rng.uniform(min_axis, max(min_axis, limit)) for limit in limits)
    center = (
        rng.uniform(0.32 * h, 0.6 * h),
        rng.uniform(semi_axes[1], w - semi_axes[1]),
        rng.uniform(semi_axes[2], c - semi_axes[2]),
    )
    return center, semi_axes


def generate_synthetic(
    seed: Optional[int],
    dims: Tuple[int, int, int] = SYNTH_DEFAULTS["dims"],
    fluid_spec: Sequence[int] = SYNTH_DEFAULTS["blobs"],
    noise_std: float = SYNTH_DEFAULTS["noise_std"],
) -> Tuple[Volume, LabelVolume]:
    """
    Build one ``(H, W, C_scans)`` volume: horizontal retinal bands plus
    ``fluid_spec[k]`` ellipsoidal blobs of class ``k + 1``.

    Blobs are drawn in class order, so a later class overwrites an earlier
    one where they overlap; labels and intensities always agree.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < MIN_SYNTH_DIM:
        raise ShapeError(f"synthetic volumes need three dims >= {MIN_SYNTH_DIM}, got {dims}")
    if len(fluid_spec) != len(FOREGROUND_CLASSES):
        raise ConfigError(f"fluid_spec needs one blob count per fluid class, got {fluid_spec}")
    if any(not 0 <= n <= MAX_BLOBS_PER_CLASS for n in fluid_spec):
        raise ConfigError(f"blob counts must lie in [0, {MAX_BLOBS_PER_CLASS}], got {fluid_spec}")

    rng = make_rng(seed)
    voxels = _retina_bands(dims, SYNTH_DEFAULTS["bands"], SYNTH_DEFAULTS["background"])
    labels = np.zeros(dims, dtype=np.uint8)
    for class_id, count in zip(FOREGROUND_CLASSES, fluid_spec):
        for _ in range(count):
            center, semi_axes = _sample_blob(rng, dims, SYNTH_DEFAULTS["min_semi_axis"])
            mask = draw_ellipsoid_mask(dims, center, semi_axes)
            labels[mask] = class_id
    for class_id, intensity in SYNTH_DEFAULTS["fluid_intensity"].items():
        voxels[labels == class_id] = intensity
    if noise_std > 0:
        voxels = voxels + rng.normal(0.0, noise_std, size=dims)
    voxels = np.clip(voxels, 0.0, 1.0).astype(np.float32)
    return Volume(voxels, Vendor.SYNTHETIC), LabelVolume(labels, Vendor.SYNTHETIC)


class SyntheticOCTGenerator(BaseGenerator):
    """Writes ``count`` synthetic volume/label pairs plus a ``manifest.tsv``.

    Layout::

        output_dir/images/synth_000.svol
        output_dir/labels/synth_000.svol
        output_dir/manifest.tsv
    """

    def __init__(self, config: Dict):
        super().__init__(config)
        self.count = config.get("count", SYNTH_DEFAULTS["count"])
        self.dims = tuple(config.get("dims", SYNTH_DEFAULTS["dims"]))
        self.blobs = tuple(config.get("blobs", SYNTH_DEFAULTS["blobs"]))
        self.noise_std = config.get("noise_std", SYNTH_DEFAULTS["noise_std"])
        self.seed = config.get("seed", None)
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        self.setup_directories()

    def get_subdirectories(self):
        return ["images", "labels"]

    def _volume_seed(self, index: int) -> int:
        if self.seed is None:
            return int(self.rng.integers(0, 2**31 - 1))
        return int(self.seed) * 1000 + index

    def generate_volumes(self) -> List[Tuple[str, str]]:
        self.log_generation_info(
            f"Generating {self.count} synthetic volumes of dims {self.dims} with blobs {self.blobs}..."
        )
        summary = SummaryWriter(self.output_dir, columns=["name", "seed", "irf_voxels", "srf_voxels", "ped_voxels"])
        pairs = []
        for index in tqdm(range(self.count), desc="volumes"):
            seed = self._volume_seed(index)
            volume, labels = generate_synthetic(seed, self.dims, self.blobs, self.noise_std)
            name = f"synth_{index:03d}"
            image_path = self.save_volume(volume, name, "images")
            label_path = self.save_volume(labels, name, "labels")
            pairs.append((image_path, label_path))
            counts = np.bincount(labels.classes.reshape(-1), minlength=4)
            summary.add(name=name, seed=seed, irf_voxels=int(counts[1]), srf_voxels=int(counts[2]),
                        ped_voxels=int(counts[3]))
        write_manifest(os.path.join(self.output_dir, "manifest.tsv"), pairs)
        if self.config.get("summary", False):
            summary.write_csv("summary.csv")
        return pairs
