#!/usr/bin/env python3
"""
Preview rendering for B-scans and predicted fluid masks.

Wraps the PIL calls so the CLI and tests never touch Pillow directly.
"""

from typing import Dict, Optional, Tuple

import numpy as np
from PIL import Image

from octfluid.helpers.constants import CLASS_COLOUR_MAP


class ImageCanvas:
    """Greyscale B-scan with optional colour overlays.

    Args:
        bscan: ``(H, W)`` intensities in ``[0, 1]``
    """

    def __init__(self, bscan: np.ndarray):
        bscan = np.asarray(bscan, dtype=np.float32)
        if bscan.ndim != 2:
            raise ValueError(f"a B-scan preview needs a 2-d array, got shape {bscan.shape}")
        grey = np.round(np.clip(bscan, 0.0, 1.0) * 255.0).astype(np.uint8)
        self._img = Image.fromarray(grey).convert("RGB")
        self.size = (bscan.shape[1], bscan.shape[0])

    @property
    def img(self):
        """Access underlying PIL Image."""
        return self._img

    def overlay_labels(
        self,
        labels: np.ndarray,
        colours: Optional[Dict[int, Tuple[int, int, int]]] = None,
        alpha: float = 0.5,
    ) -> "ImageCanvas":
        """Blend each class colour over the pixels carrying that label."""
        colours = CLASS_COLOUR_MAP if colours is None else colours
        labels = np.asarray(labels)
        if labels.shape != (self.size[1], self.size[0]):
            raise ValueError(f"label slice {labels.shape} does not match B-scan {self.size[::-1]}")
        base = np.asarray(self._img, dtype=np.float32)
        for class_id, colour in colours.items():
            mask = labels == class_id
            base[mask] = (1.0 - alpha) * base[mask] + alpha * np.asarray(colour, dtype=np.float32)
        self._img = Image.fromarray(np.round(base).astype(np.uint8))
        return self

    def resize(self, new_size):
        """Nearest-neighbour resize so label edges stay crisp."""
        if isinstance(new_size, int):
            new_size = (new_size, new_size)
        canvas = ImageCanvas.__new__(ImageCanvas)
        canvas._img = self._img.resize(new_size, Image.Resampling.NEAREST)
        canvas.size = tuple(new_size)
        return canvas

    def save(self, path, **kwargs):
        self._img.save(path, **kwargs)


def render_preview(voxels: np.ndarray, labels: Optional[np.ndarray] = None, index: Optional[int] = None) -> ImageCanvas:
    """Canvas of one B-scan (middle one by default) of an ``(H, W, C_scans)`` volume."""
    index = voxels.shape[2] // 2 if index is None else index
    canvas = ImageCanvas(voxels[:, :, index])
    if labels is not None:
        canvas.overlay_labels(labels[:, :, index])
    return canvas
