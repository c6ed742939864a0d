"""Optimiser, training loop, inference entry points and the bench report."""

from octfluid.training.optimizer import Adam, AdamState, adam_step, learning_rate
from octfluid.training.trainer import Trainer, TrainResult, evaluate, load_dataset, predict, train
from octfluid.training.bench import BenchReport, bench
from octfluid.training.gradcheck_suite import SUITE_MODULES, run_suite

__all__ = [
    "Adam",
    "AdamState",
    "adam_step",
    "learning_rate",
    "Trainer",
    "TrainResult",
    "evaluate",
    "load_dataset",
    "predict",
    "train",
    "BenchReport",
    "bench",
    "SUITE_MODULES",
    "run_suite",
]
