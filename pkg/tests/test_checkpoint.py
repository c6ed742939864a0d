"""Tests for octfluid.network.checkpoint."""

import numpy as np
import pytest

from octfluid.autodiff.tensor import Tensor, no_grad
from octfluid.helpers.config import ModelConfig
from octfluid.helpers.errors import ChecksumError, ConfigError
from octfluid.network.checkpoint import (
    checkpoint_hash,
    decode_checkpoint,
    encode_checkpoint,
    fnv1a_64,
    load_checkpoint,
    save_checkpoint,
)
from octfluid.network.model import FluidSegmenter

MICRO = ModelConfig(embed_dim=8, num_heads=(2, 2, 4, 8), window_size=(2, 2, 2), seed=3)


@pytest.fixture
def saved(tmp_path):
    model = FluidSegmenter(MICRO)
    path = tmp_path / "model.svck"
    digest = save_checkpoint(model, path)
    return model, path, digest


class TestChecksum:
    """FNV-1a 64 content hash."""

    def test_known_vectors(self):
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C

    def test_encode_decode_keeps_names_and_values(self):
        state = {"b.weight": np.arange(6, dtype=np.float32).reshape(2, 3), "a.bias": np.ones(2, dtype=np.float32)}
        config, decoded = decode_checkpoint(encode_checkpoint(MICRO, state))
        assert config == MICRO
        assert list(decoded) == ["b.weight", "a.bias"]
        np.testing.assert_array_equal(decoded["b.weight"], state["b.weight"])


class TestSaveLoad:
    """Checkpoint files on disk."""

    def test_round_trip_gives_identical_outputs(self, saved):
        model, path, _ = saved
        loaded = load_checkpoint(path)
        volume = Tensor(np.random.default_rng(0).random((1, 1, 16, 16, 16)))
        with no_grad():
            np.testing.assert_array_equal(model(volume).data, loaded(volume).data)
        assert loaded.config == MICRO

    def test_digest_matches_file(self, saved):
        _, path, digest = saved
        assert checkpoint_hash(path) == digest
        assert len(digest) == 16

    def test_flipped_byte_fails_hash(self, saved):
        _, path, _ = saved
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumError):
            load_checkpoint(path)

    def test_truncated_file_fails_hash(self, saved):
        _, path, _ = saved
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(ChecksumError):
            load_checkpoint(path)

    def test_config_mismatch_prints_both(self, saved):
        _, path, _ = saved
        other = MICRO.with_overrides(use_va=False)
        with pytest.raises(ConfigError) as excinfo:
            load_checkpoint(path, expected_config=other)
        message = str(excinfo.value)
        assert "use_va=true" in message
        assert "use_va=false" in message

    def test_matching_expected_config_loads(self, saved):
        _, path, _ = saved
        assert load_checkpoint(path, expected_config=MICRO).config == MICRO

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.svck")
