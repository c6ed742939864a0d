"""
Training loop, stitched prediction and manifest evaluation.

One epoch visits every training volume once in a seeded random order. Each
step draws a depth crop per volume in the batch, optionally shifts its
intensities, runs the network, and takes one Adam step on the dice loss. A
single generator drives all sampling, so a run is fully determined by its
configs and data; ``train_state.npz`` stores that generator together with
the optimiser state so an interrupted run resumes on the same trajectory.

Artefacts in the output directory::

    best.svck        weights of the lowest mean epoch loss so far
    last.svck        current weights
    loss_log.csv     epoch, loss, lr
    train_state.npz  optimiser moments, step, next epoch, rng state, best loss
    config.cfg       the model and training configs of the run

Checkpoints and the training state are written together every
``checkpoint_every`` epochs and after the last epoch; between those points the
best weights are held in memory.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from octfluid.autodiff.tensor import Tensor
from octfluid.evaluation.losses import dice_loss
from octfluid.evaluation.report import MetricsReport, aggregate, evaluate_volume, write_report
from octfluid.helpers.config import ModelConfig, TrainConfig, write_config_file
from octfluid.helpers.constants import PIPELINE_DEFAULTS
from octfluid.helpers.errors import ConfigError, NumericalError, ShapeError
from octfluid.helpers.image_utils import render_preview
from octfluid.helpers.planner import load_manifest
from octfluid.helpers.random_seed import make_rng, restore_rng, rng_state
from octfluid.helpers.summary_writer import SummaryWriter
from octfluid.network.checkpoint import load_checkpoint, save_checkpoint
from octfluid.network.model import FluidSegmenter, build_model
from octfluid.pipeline.sampling import augment, sample_training_crop
from octfluid.pipeline.stitching import Prediction, predict_volume
from octfluid.pipeline.volume import LabelVolume, Volume, read_pair, read_volume, resize_inplane, write_volume
from octfluid.training.optimizer import Adam, AdamState, learning_rate

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.svck"
LAST_CHECKPOINT = "last.svck"
LOSS_LOG = "loss_log.csv"
TRAIN_STATE = "train_state.npz"
RUN_CONFIG = "config.cfg"

Dataset = List[Tuple[Volume, LabelVolume]]


def load_dataset(manifest: Union[str, Path], resize: Optional[Tuple[int, int]] = None) -> Dataset:
    """Read every pair listed in ``manifest``, optionally resizing in-plane."""
    dataset = []
    for image_path, label_path in load_manifest(manifest):
        volume, labels = read_pair(image_path, label_path)
        if resize is not None:
            volume, labels = resize_inplane(volume, resize), resize_inplane(labels, resize)
        dataset.append((volume, labels))
    logger.info("Loaded %d volumes from %s", len(dataset), manifest)
    return dataset


@dataclass
class TrainResult:
    output_dir: Path
    best_loss: float
    epoch_losses: List[float] = field(default_factory=list)
    checkpoint_hash: str = ""

    @property
    def best_checkpoint(self) -> Path:
        return self.output_dir / BEST_CHECKPOINT

    @property
    def last_checkpoint(self) -> Path:
        return self.output_dir / LAST_CHECKPOINT


class Trainer:
    """Dice-loss training of a :class:`FluidSegmenter` on depth crops.

    Args:
        model_cfg: architecture of the network to train
        train_cfg: optimisation and sampling settings
        dataset: ``(Volume, LabelVolume)`` pairs
        output_dir: where checkpoints and logs are written
        progress: show a tqdm bar over epochs
    """

    def __init__(
        self,
        model_cfg: ModelConfig,
        train_cfg: TrainConfig,
        dataset: Dataset,
        output_dir: Union[str, Path],
        progress: bool = False,
    ):
        if not dataset:
            raise ConfigError("training needs at least one volume")
        if train_cfg.crop_depth % model_cfg.downsample:
            raise ConfigError(
                f"crop_depth {train_cfg.crop_depth} must be divisible by the model's "
                f"downsampling factor {model_cfg.downsample}"
            )
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.dataset = dataset
        self.output_dir = Path(output_dir)
        self.progress = progress
        self._logger = logging.getLogger(self.__class__.__name__)

        self.model = build_model(model_cfg)
        self.optimizer = Adam(self.model.named_parameters(), train_cfg)
        self.rng = make_rng(train_cfg.seed)
        self.start_epoch = 0
        self.best_loss = math.inf
        self._best_state: Optional[Dict[str, np.ndarray]] = None
        self.history: List[Tuple[float, float]] = []

    # ------------------------------------------------------------------ state

    def save_state(self, next_epoch: int) -> None:
        arrays = self.optimizer.state.to_arrays()
        arrays.update(
            epoch=np.asarray(next_epoch, dtype=np.int64),
            best_loss=np.asarray(self.best_loss, dtype=np.float64),
            rng_state=np.asarray(json.dumps(rng_state(self.rng))),
            history=np.asarray(self.history, dtype=np.float64).reshape(-1, 2),
        )
        np.savez(self.output_dir / TRAIN_STATE, **arrays)

    def resume(self) -> None:
        """Restore model, optimiser, rng and history from ``output_dir``."""
        state_path = self.output_dir / TRAIN_STATE
        if not state_path.exists():
            raise FileNotFoundError(f"Training state not found: {state_path}")
        restored = load_checkpoint(self.output_dir / LAST_CHECKPOINT, expected_config=self.model_cfg)
        self.model.load_state_dict(restored.state_dict())
        with np.load(state_path, allow_pickle=False) as arrays:
            self.optimizer.state = AdamState.from_arrays(arrays)
            self.start_epoch = int(arrays["epoch"])
            self.best_loss = float(arrays["best_loss"])
            self.rng = restore_rng(json.loads(str(arrays["rng_state"])))
            self.history = [tuple(row) for row in arrays["history"].tolist()]
        self._logger.info("Resumed from epoch %d (best loss %.4f)", self.start_epoch, self.best_loss)

    def write_checkpoints(self, next_epoch: int) -> str:
        """Flush best (if it changed), last and the training state; returns the last hash."""
        if self._best_state is not None:
            best = FluidSegmenter(self.model_cfg, initialize=False)
            best.load_state_dict(self._best_state)
            save_checkpoint(best, self.output_dir / BEST_CHECKPOINT)
            self._best_state = None
        digest = save_checkpoint(self.model, self.output_dir / LAST_CHECKPOINT)
        self.save_state(next_epoch)
        return digest

    def write_loss_log(self) -> None:
        writer = SummaryWriter(str(self.output_dir), columns=["epoch", "loss", "lr"])
        for epoch, (loss, lr) in enumerate(self.history, start=1):
            writer.add(epoch=epoch, loss=float(loss), lr=float(lr))
        writer.write_csv(LOSS_LOG)

    # ------------------------------------------------------------------- loop

    def _batch(self, indices: Sequence[int]) -> Tuple[Tensor, np.ndarray]:
        images, labels = [], []
        for index in indices:
            volume, target = self.dataset[index]
            crop = sample_training_crop(volume, target, self.cfg.crop_depth, self.rng, self.model_cfg.downsample)
            image = crop.image.numpy()
            if self.cfg.augment:
                image, _ = augment(image, crop.labels, self.rng, self.cfg.shift_prob, self.cfg.max_shift)
            images.append(image)
            labels.append(crop.labels)
        shapes = {image.shape for image in images}
        if len(shapes) > 1:
            raise ShapeError(f"batch mixes crop shapes {sorted(shapes)}; use batch_size=1 or resize")
        return Tensor(np.concatenate(images, axis=0)), np.concatenate(labels, axis=0)

    def train_step(self, indices: Sequence[int], lr: float) -> float:
        images, labels = self._batch(indices)
        probs = self.model(images)
        loss = dice_loss(probs, labels, self.cfg.dice_eps)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss {value} at Adam step {self.optimizer.state.step + 1}")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step(lr)
        return value

    def run_epoch(self, epoch: int) -> float:
        lr = learning_rate(self.cfg, epoch)
        order = self.rng.permutation(len(self.dataset))
        losses = [
            self.train_step(order[start:start + self.cfg.batch_size], lr)
            for start in range(0, len(order), self.cfg.batch_size)
        ]
        mean_loss = float(np.mean(losses))
        self.history.append((mean_loss, lr))
        return mean_loss

    def train(self, resume: bool = False) -> TrainResult:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if resume:
            self.resume()
        write_config_file(self.output_dir / RUN_CONFIG, self.model_cfg, self.cfg)
        started = time.perf_counter()
        digest = ""
        epochs = range(self.start_epoch, self.cfg.epochs)
        for epoch in tqdm(epochs, desc="epochs", disable=not self.progress):
            loss = self.run_epoch(epoch)
            self._logger.debug("epoch %d: loss %.6f", epoch + 1, loss)
            if loss < self.best_loss:
                self.best_loss = loss
                self._best_state = self.model.state_dict()
            last_epoch = epoch + 1 == self.cfg.epochs
            if (epoch + 1) % self.cfg.checkpoint_every == 0 or last_epoch:
                digest = self.write_checkpoints(epoch + 1)
            self.write_loss_log()
        self._logger.info(
            "Trained %d epochs in %.1fs; best loss %.4f",
            self.cfg.epochs - self.start_epoch, time.perf_counter() - started, self.best_loss,
        )
        return TrainResult(
            output_dir=self.output_dir,
            best_loss=self.best_loss,
            epoch_losses=[loss for loss, _ in self.history],
            checkpoint_hash=digest,
        )


def train(
    manifest: Union[str, Path],
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    output_dir: Union[str, Path],
    resume: bool = False,
    resize: Optional[Tuple[int, int]] = None,
    progress: bool = False,
) -> TrainResult:
    dataset = load_dataset(manifest, resize)
    return Trainer(model_cfg, train_cfg, dataset, output_dir, progress).train(resume=resume)


# =============================================================================
# Inference
# =============================================================================


def _inference_model(
    checkpoint: Union[str, Path, FluidSegmenter], expected_config: Optional[ModelConfig]
) -> FluidSegmenter:
    if not isinstance(checkpoint, FluidSegmenter):
        return load_checkpoint(checkpoint, expected_config=expected_config)
    if expected_config is not None and checkpoint.config != expected_config:
        raise ConfigError(
            "model config does not match the requested config\n"
            f"--- model ---\n{checkpoint.config.to_text()}"
            f"--- requested ---\n{expected_config.to_text()}"
        )
    return checkpoint


def predict(
    checkpoint: Union[str, Path, FluidSegmenter],
    volume_path: Union[str, Path],
    out_path: Union[str, Path],
    crop_depth: int = PIPELINE_DEFAULTS["crop_depth"],
    overlap: float = PIPELINE_DEFAULTS["overlap"],
    blend: str = PIPELINE_DEFAULTS["blend"],
    resize: Optional[Tuple[int, int]] = None,
    preview: Optional[Union[str, Path]] = None,
    progress: bool = False,
    expected_config: Optional[ModelConfig] = None,
) -> Prediction:
    """Segment one ``.svol`` volume and write the label volume to ``out_path``.

    Raises:
        ConfigError: the checkpoint was trained with a config other than
            ``expected_config``, or ``volume_path`` holds labels
    """
    model = _inference_model(checkpoint, expected_config)
    volume = read_volume(volume_path)
    if not isinstance(volume, Volume):
        raise ConfigError(f"{volume_path} holds labels, not intensities")
    source = volume
    if resize is not None:
        volume = resize_inplane(volume, resize)
    prediction = predict_volume(model, volume, crop_depth, overlap, blend, model.config.downsample, progress)
    if prediction.labels.dims != source.dims:
        prediction.labels = resize_inplane(prediction.labels, source.dims[:2])
    prediction.labels.vendor = source.vendor
    write_volume(prediction.labels, out_path)
    if preview is not None:
        render_preview(source.voxels, prediction.labels.classes).save(preview)
    logger.info("Predicted %s -> %s", volume_path, out_path)
    return prediction


def evaluate(
    checkpoint: Union[str, Path, FluidSegmenter],
    manifest: Union[str, Path],
    report_path: Optional[Union[str, Path]] = None,
    crop_depth: int = PIPELINE_DEFAULTS["crop_depth"],
    overlap: float = PIPELINE_DEFAULTS["overlap"],
    blend: str = PIPELINE_DEFAULTS["blend"],
    resize: Optional[Tuple[int, int]] = None,
    progress: bool = False,
    expected_config: Optional[ModelConfig] = None,
) -> MetricsReport:
    """Predict every volume of ``manifest`` and average the per-volume metrics."""
    model = _inference_model(checkpoint, expected_config)
    reports = []
    pairs = load_manifest(manifest)
    for image_path, label_path in tqdm(pairs, desc="volumes", disable=not progress):
        volume, labels = read_pair(image_path, label_path)
        if resize is not None:
            volume = resize_inplane(volume, resize)
        prediction = predict_volume(model, volume, crop_depth, overlap, blend, model.config.downsample)
        predicted = prediction.labels
        if predicted.dims != labels.dims:
            predicted = resize_inplane(predicted, labels.dims[:2])
        reports.append(evaluate_volume(predicted, labels, name=Path(image_path).stem))
    if report_path is not None:
        write_report(reports, report_path)
    return aggregate(reports)
