"""Random seed management for reproducible initialisation, sampling and training.

Components never touch numpy's global generator; each one receives its own
``np.random.Generator`` from :func:`make_rng`. :func:`set_seed` still seeds the
global state for any third-party code that relies on it.

Usage:
    from octfluid.helpers.random_seed import make_rng

    rng = make_rng(1714)
    start = rng.integers(0, 18)
"""

import random
from typing import Optional

import numpy as np


def set_seed(seed: Optional[int]) -> None:
    """Set the random seed for both random and numpy.

    Args:
        seed: Random seed value. If None, no seed is set (random behavior).
    """
    if seed is not None:
        random.seed(seed)
        np.random.seed(seed)


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Create an independent generator; ``None`` gives fresh OS entropy."""
    return np.random.default_rng(seed)


def rng_state(rng: np.random.Generator) -> dict:
    """Snapshot of a generator's bit-generator state (JSON-serialisable)."""
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    """Rebuild a generator from :func:`rng_state` output."""
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng
