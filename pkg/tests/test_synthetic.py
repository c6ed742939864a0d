"""Tests for the synthetic OCT volume generator."""

import csv
import math

import numpy as np
import pytest

from octfluid.generators.synthetic_oct import (
    SyntheticOCTGenerator,
    draw_ellipsoid_mask,
    generate_synthetic,
)
from octfluid.helpers.constants import SYNTH_DEFAULTS
from octfluid.helpers.errors import ConfigError, ShapeError
from octfluid.helpers.planner import load_manifest
from octfluid.pipeline.volume import LabelVolume, Vendor, Volume, read_pair


class TestEllipsoid:
    def test_voxel_count_matches_volume(self):
        mask = draw_ellipsoid_mask((64, 64, 64), (32, 32, 32), (24, 20, 16))
        expected = 4.0 / 3.0 * math.pi * 24 * 20 * 16
        assert abs(mask.sum() - expected) / expected < 0.01

    def test_centre_inside_corner_outside(self):
        mask = draw_ellipsoid_mask((20, 20, 20), (10, 10, 10), (3, 4, 5))
        assert mask[10, 10, 10]
        assert not mask[0, 0, 0]
        assert mask[13, 10, 10] and not mask[14, 10, 10]


class TestGenerateSynthetic:
    def test_deterministic_for_seed(self):
        a_vol, a_lab = generate_synthetic(4, (32, 32, 16))
        b_vol, b_lab = generate_synthetic(4, (32, 32, 16))
        np.testing.assert_array_equal(a_vol.voxels, b_vol.voxels)
        np.testing.assert_array_equal(a_lab.classes, b_lab.classes)

    def test_different_seeds_differ(self):
        _, a = generate_synthetic(1, (32, 32, 16))
        _, b = generate_synthetic(2, (32, 32, 16))
        assert not np.array_equal(a.classes, b.classes)

    def test_shapes_and_types(self):
        volume, labels = generate_synthetic(0)
        assert isinstance(volume, Volume) and isinstance(labels, LabelVolume)
        assert volume.dims == labels.dims == SYNTH_DEFAULTS["dims"]
        assert volume.vendor == Vendor.SYNTHETIC
        assert volume.voxels.min() >= 0.0 and volume.voxels.max() <= 1.0

    def test_no_blobs_gives_background_only(self):
        _, labels = generate_synthetic(3, (32, 32, 16), (0, 0, 0))
        assert labels.classes.max() == 0

    def test_intensities_follow_labels_without_noise(self):
        volume, labels = generate_synthetic(6, (48, 48, 24), (2, 1, 1), noise_std=0.0)
        for class_id, intensity in SYNTH_DEFAULTS["fluid_intensity"].items():
            inside = labels.classes == class_id
            np.testing.assert_allclose(volume.voxels[inside], intensity, rtol=1e-6)

    @pytest.mark.parametrize("dims", [(8, 32, 32), (32, 32)])
    def test_rejects_small_or_wrong_rank_dims(self, dims):
        with pytest.raises(ShapeError):
            generate_synthetic(0, dims)

    @pytest.mark.parametrize("blobs", [(1, 1), (6, 0, 0), (-1, 0, 0)])
    def test_rejects_bad_blob_counts(self, blobs):
        with pytest.raises(ConfigError):
            generate_synthetic(0, (32, 32, 16), blobs)


class TestSyntheticOCTGenerator:
    def test_writes_pairs_and_manifest(self, tmp_path):
        config = {"output_dir": str(tmp_path), "count": 3, "dims": (16, 16, 16), "seed": 2, "summary": True}
        pairs = SyntheticOCTGenerator(config).generate_volumes()

        assert pairs[0] == ("images/synth_000.svol", "labels/synth_000.svol")
        manifest = load_manifest(tmp_path / "manifest.tsv")
        assert len(manifest) == 3
        for image_path, label_path in manifest:
            volume, labels = read_pair(image_path, label_path)
            assert volume.dims == (16, 16, 16)

        with open(tmp_path / "summary.csv", newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert [row["name"] for row in rows] == ["synth_000", "synth_001", "synth_002"]
        assert [int(row["seed"]) for row in rows] == [2000, 2001, 2002]

    def test_volume_matches_direct_generation(self, tmp_path):
        config = {"output_dir": str(tmp_path), "count": 1, "dims": (16, 16, 16), "seed": 7}
        SyntheticOCTGenerator(config).generate_volumes()
        (image_path, label_path), = load_manifest(tmp_path / "manifest.tsv")
        _, labels = read_pair(image_path, label_path)
        _, direct = generate_synthetic(7000, (16, 16, 16))
        np.testing.assert_array_equal(labels.classes, direct.classes)

    def test_no_summary_by_default(self, tmp_path):
        SyntheticOCTGenerator({"output_dir": str(tmp_path), "count": 1, "dims": (16, 16, 16)}).generate_volumes()
        assert not (tmp_path / "summary.csv").exists()
        assert (tmp_path / "manifest.tsv").exists()

    def test_rejects_zero_count(self, tmp_path):
        with pytest.raises(ConfigError):
            SyntheticOCTGenerator({"output_dir": str(tmp_path), "count": 0})
