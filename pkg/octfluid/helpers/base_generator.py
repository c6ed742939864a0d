#!/usr/bin/env python3
"""
Base class for dataset generators that write ``.svol`` volume files.

Subclasses decide what to generate; the base handles configuration, the
output directory tree, seeding and file naming.
"""

import logging
import os
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Tuple

from octfluid.helpers.random_seed import make_rng, set_seed
from octfluid.pipeline.volume import LabelVolume, Volume, write_volume

VOLUME_EXTENSION = "svol"


class BaseGenerator(ABC):
    """
    Abstract base class for volume dataset generators.

    Subclasses must implement ``generate_volumes()``.

    Attributes:
        config (dict): generator parameters; must include ``output_dir``
        rng: generator seeded from ``config["seed"]``
    """

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self._logger = logging.getLogger(self.__class__.__name__)

        if "output_dir" not in config:
            raise ValueError(
                "Configuration must include 'output_dir' key specifying "
                "where to save generated volumes."
            )

        seed = config.get("seed", None)
        set_seed(seed)
        self.rng = make_rng(seed)

    @property
    def output_dir(self) -> str:
        return self.config["output_dir"]

    def get_subdirectories(self) -> list:
        """Subdirectories (relative to ``output_dir``) created by ``setup_directories``."""
        return []

    def setup_directories(self):
        os.makedirs(self.output_dir, exist_ok=True)
        for subdir in self.get_subdirectories():
            if isinstance(subdir, (list, tuple)):
                path = os.path.join(self.output_dir, *subdir)
            else:
                path = os.path.join(self.output_dir, subdir)
            os.makedirs(path, exist_ok=True)

    def log_generation_info(self, message: str):
        self._logger.info(message)

    def save_volume(self, volume, filename_without_ext: str, *subdirs) -> str:
        """
        Write a Volume or LabelVolume below ``output_dir``.

        Example:
            self.save_volume(labels, "synth_000", "labels")
            # writes output_dir/labels/synth_000.svol

        Returns:
            The path relative to ``output_dir`` (manifest style).
        """
        if not isinstance(volume, (Volume, LabelVolume)):
            raise TypeError(f"expected a Volume or LabelVolume, got {type(volume).__name__}")
        relative = os.path.join(*subdirs, f"{filename_without_ext}.{VOLUME_EXTENSION}")
        write_volume(volume, os.path.join(self.output_dir, relative))
        return relative

    @abstractmethod
    def generate_volumes(self) -> List[Tuple[str, str]]:
        """Generate and save the dataset; returns ``(image, label)`` relative paths."""
