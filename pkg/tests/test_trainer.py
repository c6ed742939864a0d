"""Tests for the optimiser, the training loop and manifest-level inference."""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from octfluid.autodiff.layers import Linear
from octfluid.autodiff.tensor import Tensor
from octfluid.evaluation.report import MetricsReport
from octfluid.generators.synthetic_oct import SyntheticOCTGenerator, generate_synthetic
from octfluid.helpers.config import ModelConfig, TrainConfig, read_config_file
from octfluid.helpers.errors import ConfigError, OptimizerError
from octfluid.network.checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from octfluid.network.model import FluidSegmenter
from octfluid.pipeline.volume import LabelVolume, read_volume, write_volume
from octfluid.training.optimizer import Adam, AdamState, adam_step, clip_by_global_norm, learning_rate
from octfluid.training.trainer import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    LOSS_LOG,
    RUN_CONFIG,
    TRAIN_STATE,
    Trainer,
    evaluate,
    load_dataset,
    predict,
    train,
)

MICRO = ModelConfig(embed_dim=8, num_heads=(2, 2, 4, 8), window_size=(2, 2, 2), seed=3)


def micro_train_config(**overrides) -> TrainConfig:
    values = dict(epochs=2, crop_depth=16, checkpoint_every=1, seed=3)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    """Two 16x16x20 synthetic pairs and their manifest."""
    out = tmp_path_factory.mktemp("synthetic")
    SyntheticOCTGenerator(
        {"output_dir": str(out), "count": 2, "dims": (16, 16, 20), "blobs": (1, 1, 0), "seed": 5}
    ).generate_volumes()
    return out / "manifest.tsv"


@pytest.fixture(scope="module")
def dataset(manifest):
    return load_dataset(manifest)


class TestAdam:
    """Adam update rule and its optional extras."""

    def test_first_step_is_lr_times_sign(self):
        """Bias correction makes the first update exactly lr * g / |g|."""
        cfg = TrainConfig(lr=0.1)
        grad = np.array([0.5, -2.0, 3e-3, -7.0], dtype=np.float32)
        params = {"w": np.ones(4, dtype=np.float32)}
        state = adam_step(params, {"w": grad}, AdamState(), cfg)
        assert state.step == 1
        np.testing.assert_allclose(params["w"], 1.0 - 0.1 * np.sign(grad), rtol=1e-5)

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.5, -0.5], dtype=np.float32)}
        state = adam_step(params, {"w": np.zeros(2, dtype=np.float32)}, AdamState(), TrainConfig())
        np.testing.assert_array_equal(params["w"], [1.5, -0.5])
        np.testing.assert_array_equal(state.m["w"], 0.0)

    def test_quadratic_bowl_decreases_monotonically(self):
        cfg = TrainConfig(lr=0.01)
        params = {"theta": np.array([5.0], dtype=np.float64)}
        state = AdamState()
        losses = []
        for _ in range(100):
            losses.append(float(params["theta"][0] ** 2))
            adam_step(params, {"theta": 2.0 * params["theta"]}, state, cfg)
        assert all(later < earlier for earlier, later in zip(losses, losses[1:]))

    def test_missing_gradient_raises(self):
        with pytest.raises(OptimizerError, match="'b'"):
            adam_step({"a": np.zeros(2), "b": np.zeros(2)}, {"a": np.ones(2)}, AdamState(), TrainConfig())

    def test_gradient_shape_mismatch_raises(self):
        with pytest.raises(OptimizerError):
            adam_step({"a": np.zeros(2)}, {"a": np.ones(3)}, AdamState(), TrainConfig())

    def test_weight_decay_pulls_towards_zero(self):
        """Decay is added to the gradient, so the first step moves each weight by exactly lr."""
        cfg = TrainConfig(lr=0.01, weight_decay=0.1)
        params = {"w": np.array([2.0, -2.0], dtype=np.float32)}
        adam_step(params, {"w": np.zeros(2, dtype=np.float32)}, AdamState(), cfg)
        np.testing.assert_allclose(params["w"], [1.99, -1.99], rtol=1e-6)

    def test_clip_by_global_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        norm = clip_by_global_norm(grads, 1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose([grads["a"][0], grads["b"][0]], [0.6, 0.8], rtol=1e-9)

    def test_clip_leaves_small_gradients(self):
        grads = {"a": np.array([0.3, 0.4])}
        clip_by_global_norm(grads, 1.0)
        np.testing.assert_array_equal(grads["a"], [0.3, 0.4])

    def test_learning_rate_schedules(self):
        constant = TrainConfig(lr=1e-3, epochs=10)
        assert learning_rate(constant, 7) == 1e-3
        cosine = TrainConfig(lr=1.0, epochs=10, lr_schedule="cosine")
        assert learning_rate(cosine, 0) == pytest.approx(1.0)
        assert learning_rate(cosine, 5) == pytest.approx(0.5)
        assert learning_rate(cosine, 9) == pytest.approx(0.5 * (1 + math.cos(0.9 * math.pi)))

    def test_state_arrays_round_trip(self):
        state = AdamState(m={"w": np.ones(3)}, v={"w": np.full(3, 2.0)}, step=4)
        restored = AdamState.from_arrays(state.to_arrays())
        assert restored.step == 4
        np.testing.assert_array_equal(restored.m["w"], state.m["w"])
        np.testing.assert_array_equal(restored.v["w"], state.v["w"])

    def test_fits_linear_regression(self):
        """A convex bowl: Adam drives the squared error down by an order of magnitude."""
        rng = np.random.default_rng(0)
        x = rng.normal(size=(32, 3))
        y = x @ np.array([[1.0], [-2.0], [0.5]]) + 0.3
        layer = Linear(3, 1).initialize(0)
        optimizer = Adam(layer.named_parameters(), TrainConfig(lr=0.05))

        def loss_value():
            return ((layer(Tensor(x)) - Tensor(y)) ** 2).mean()

        initial = loss_value().item()
        for _ in range(300):
            optimizer.zero_grad()
            loss = loss_value()
            loss.backward()
            optimizer.step()
        assert loss_value().item() < 0.1 * initial
        assert optimizer.state.step == 300

    def test_step_without_backward_raises(self):
        layer = Linear(2, 2).initialize(0)
        optimizer = Adam(layer.named_parameters(), TrainConfig())
        optimizer.zero_grad()
        with pytest.raises(OptimizerError):
            optimizer.step()


class TestTrainer:
    """Epoch loop, artefacts and resuming."""

    def test_rejects_empty_dataset(self, tmp_path):
        with pytest.raises(ConfigError):
            Trainer(MICRO, micro_train_config(), [], tmp_path)

    def test_rejects_crop_depth_not_multiple_of_downsampling(self, dataset, tmp_path):
        with pytest.raises(ConfigError, match="crop_depth"):
            Trainer(MICRO, micro_train_config(crop_depth=12), dataset, tmp_path)

    def test_load_dataset(self, dataset):
        assert len(dataset) == 2
        volume, labels = dataset[0]
        assert volume.dims == labels.dims == (16, 16, 20)

    def test_writes_artefacts(self, dataset, tmp_path):
        train_cfg = micro_train_config()
        result = Trainer(MICRO, train_cfg, dataset, tmp_path).train()

        for name in (BEST_CHECKPOINT, LAST_CHECKPOINT, LOSS_LOG, TRAIN_STATE, RUN_CONFIG):
            assert (tmp_path / name).exists(), name
        assert len(result.epoch_losses) == 2
        assert all(0.0 <= loss <= 1.0 for loss in result.epoch_losses)
        assert result.best_loss == min(result.epoch_losses)
        assert result.checkpoint_hash == checkpoint_hash(result.last_checkpoint)

        with open(tmp_path / LOSS_LOG, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert [row["epoch"] for row in rows] == ["1", "2"]
        assert float(rows[0]["lr"]) == pytest.approx(train_cfg.lr)

        assert read_config_file(tmp_path / RUN_CONFIG) == (MICRO, train_cfg)
        restored = load_checkpoint(result.best_checkpoint, expected_config=MICRO)
        assert isinstance(restored, FluidSegmenter)

    def test_resume_reproduces_uninterrupted_run(self, dataset, tmp_path):
        """Stopping after one epoch and resuming gives the same losses and weights."""
        straight = Trainer(MICRO, micro_train_config(epochs=2), dataset, tmp_path / "straight")
        straight_result = straight.train()

        Trainer(MICRO, micro_train_config(epochs=1), dataset, tmp_path / "split").train()
        resumed = Trainer(MICRO, micro_train_config(epochs=2), dataset, tmp_path / "split")
        resumed_result = resumed.train(resume=True)

        assert resumed.start_epoch == 1
        np.testing.assert_allclose(resumed_result.epoch_losses, straight_result.epoch_losses, rtol=1e-6)
        for (name, a), (_, b) in zip(straight.model.named_parameters(), resumed.model.named_parameters()):
            np.testing.assert_allclose(a.data, b.data, rtol=1e-5, atol=1e-7, err_msg=name)

    def test_same_seed_same_checkpoint_hash(self, dataset, tmp_path):
        first = Trainer(MICRO, micro_train_config(epochs=1), dataset, tmp_path / "a").train()
        second = Trainer(MICRO, micro_train_config(epochs=1), dataset, tmp_path / "b").train()
        assert first.checkpoint_hash == second.checkpoint_hash
        assert first.epoch_losses == second.epoch_losses

    def test_resume_without_state_raises(self, dataset, tmp_path):
        trainer = Trainer(MICRO, micro_train_config(), dataset, tmp_path)
        with pytest.raises(FileNotFoundError):
            trainer.train(resume=True)

    def test_train_entry_point(self, manifest, tmp_path):
        result = train(manifest, micro_train_config(epochs=1), MICRO, tmp_path)
        assert result.output_dir == tmp_path
        assert result.best_checkpoint.exists()

    def test_checkpoints_are_written_at_the_cadence(self, dataset, tmp_path, monkeypatch):
        """Improved epochs only update the in-memory best; files are written every checkpoint_every."""
        import octfluid.training.trainer as trainer_module

        saved = []

        def counting_save(model, path):
            saved.append(Path(path).name)
            return save_checkpoint(model, path)

        monkeypatch.setattr(trainer_module, "save_checkpoint", counting_save)
        result = Trainer(MICRO, micro_train_config(epochs=5, checkpoint_every=5), dataset, tmp_path).train()

        assert sorted(saved) == [BEST_CHECKPOINT, LAST_CHECKPOINT]
        assert result.best_loss == min(result.epoch_losses)
        assert isinstance(load_checkpoint(result.best_checkpoint, expected_config=MICRO), FluidSegmenter)

    @pytest.mark.slow
    def test_loss_decreases_over_first_epochs(self, tmp_path):
        """Full-batch steps on two memorised volumes: every epoch lowers the loss."""
        pairs = [generate_synthetic(seed, (16, 16, 16), (1, 1, 1)) for seed in (21, 22)]
        cfg = micro_train_config(epochs=20, lr=5e-4, batch_size=2, augment=False, checkpoint_every=20)
        trainer = Trainer(MICRO, cfg, pairs, tmp_path)
        losses = [trainer.run_epoch(epoch) for epoch in range(20)]
        assert all(later < earlier for earlier, later in zip(losses, losses[1:])), losses

    @pytest.mark.slow
    def test_overfits_single_volume(self, tmp_path):
        volume, labels = generate_synthetic(11, (16, 16, 16), (2, 1, 1), noise_std=0.0)
        cfg = micro_train_config(epochs=40, lr=1e-2, augment=False, checkpoint_every=40)
        result = Trainer(MICRO, cfg, [(volume, labels)], tmp_path).train()
        assert result.epoch_losses[-1] < 0.85 * result.epoch_losses[0]


DESK_MODEL = ModelConfig(embed_dim=24, num_heads=(3, 6, 12, 24), window_size=(4, 4, 4), seed=3)


@pytest.fixture(scope="module")
def full_size_manifest(tmp_path_factory):
    """Two 64x64x32 synthetic pairs with the default blob mix."""
    out = tmp_path_factory.mktemp("synthetic_full")
    SyntheticOCTGenerator({"output_dir": str(out), "count": 2, "dims": (64, 64, 32), "seed": 7}).generate_volumes()
    return out / "manifest.tsv"


@pytest.mark.slow
class TestOverfit:
    """300 Adam steps at lr 1e-4 memorise two full-size synthetic volumes."""

    @pytest.mark.parametrize("overrides,min_dice", [
        ({}, 0.90),
        ({"use_va": False}, 0.85),
        ({"use_mrf": False}, 0.85),
    ], ids=["full", "no_va", "no_mrf"])
    def test_reaches_foreground_dice(self, full_size_manifest, tmp_path, overrides, min_dice):
        model_cfg = DESK_MODEL.with_overrides(**overrides)
        train_cfg = TrainConfig(
            epochs=150, lr=1e-4, batch_size=1, crop_depth=32, augment=False, checkpoint_every=150, seed=3
        )
        started = time.perf_counter()
        trainer = Trainer(model_cfg, train_cfg, load_dataset(full_size_manifest), tmp_path)
        trainer.train()
        assert trainer.optimizer.state.step == 300

        report = evaluate(trainer.model, full_size_manifest, crop_depth=32)
        assert time.perf_counter() - started < 30 * 60
        assert report.mean_dice_wo_bg >= min_dice, report.to_text()


class TestInference:
    """Single-volume prediction and manifest evaluation."""

    @pytest.fixture(scope="class")
    def model(self):
        return FluidSegmenter(MICRO)

    def test_predict_writes_label_volume(self, model, manifest, tmp_path):
        image_path = manifest.parent / "images" / "synth_000.svol"
        out = tmp_path / "pred.svol"
        preview = tmp_path / "pred.png"
        prediction = predict(model, image_path, out, crop_depth=16, preview=preview)

        written = read_volume(out)
        assert isinstance(written, LabelVolume)
        assert written.dims == (16, 16, 20)
        np.testing.assert_array_equal(written.classes, prediction.labels.classes)
        assert prediction.probabilities.shape == (4, 20, 16, 16)
        assert preview.exists()

    def test_predict_from_checkpoint_path(self, model, manifest, tmp_path):
        ckpt = tmp_path / "model.svck"
        save_checkpoint(model, ckpt)
        image_path = manifest.parent / "images" / "synth_001.svol"
        direct = predict(model, image_path, tmp_path / "a.svol", crop_depth=16)
        loaded = predict(ckpt, image_path, tmp_path / "b.svol", crop_depth=16)
        np.testing.assert_array_equal(direct.labels.classes, loaded.labels.classes)

    def test_predict_rejects_label_volume(self, model, tmp_path):
        path = tmp_path / "labels.svol"
        write_volume(LabelVolume(np.zeros((16, 16, 16), dtype=np.uint8)), path)
        with pytest.raises(ConfigError):
            predict(model, path, tmp_path / "out.svol", crop_depth=16)

    def test_evaluate_manifest(self, model, manifest, tmp_path):
        report_path = tmp_path / "report.txt"
        report = evaluate(model, manifest, report_path=report_path, crop_depth=16)
        assert isinstance(report, MetricsReport)
        assert report.volumes == 2
        assert report_path.exists()
        assert (tmp_path / "report.csv").exists()
        assert 0.0 <= report.to_dict()["mean_iou"] <= 1.0

    def test_inference_rejects_mismatched_config(self, model, manifest, tmp_path):
        image_path = manifest.parent / "images" / "synth_000.svol"
        wrong = MICRO.with_overrides(use_va=not MICRO.use_va)
        with pytest.raises(ConfigError, match="--- requested ---"):
            predict(model, image_path, tmp_path / "out.svol", crop_depth=16, expected_config=wrong)
        with pytest.raises(ConfigError, match="--- requested ---"):
            evaluate(model, manifest, crop_depth=16, expected_config=wrong)
        predict(model, image_path, tmp_path / "ok.svol", crop_depth=16, expected_config=MICRO)
