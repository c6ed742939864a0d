#!/usr/bin/env python3
"""
Constants and default configuration values for the octfluid package.

This module provides a single source of truth for all constants, default values,
and configuration parameters used across the network, pipeline, CLI, and tests.
"""

# =============================================================================
# Segmentation classes
# =============================================================================

CLASS_NAMES = {
    0: "BG",
    1: "IRF",
    2: "SRF",
    3: "PED",
}

FOREGROUND_CLASSES = (1, 2, 3)

# Overlay colours for previews (RGB)
CLASS_COLOUR_MAP = {
    1: (255, 0, 0),
    2: (255, 254, 4),
    3: (0, 3, 249),
}


# =============================================================================
# Model defaults
# =============================================================================

MODEL_DEFAULTS = {
    "in_channels": 1,
    "num_classes": 4,
    "embed_dim": 24,
    "patch_size": 2,
    "stages": 3,
    "blocks_per_stage": 2,
    "num_heads": (3, 6, 12, 24),
    "window_size": (4, 4, 4),
    "mlp_ratio": 4.0,
    "use_va": True,
    "use_mrf": True,
    "mrf_mode": "1d",
    "rel_pos_bias": True,
    "patch_norm": True,
    "full_res_skip": True,
    "init_std": 0.02,
    "seed": 0,
}

# Spatial dims must be divisible by this after padding
DOWNSAMPLE_FACTOR = 16

MASK_VALUE = -1e9

GELU_COEFF = 0.7978845608028654  # sqrt(2 / pi)

NORM_EPS = 1e-5


# =============================================================================
# Training defaults
# =============================================================================

TRAIN_DEFAULTS = {
    "lr": 1e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps_adam": 1e-8,
    "epochs": 600,
    "batch_size": 1,
    "seed": 0,
    "crop_depth": 32,
    "checkpoint_every": 50,
    "augment": True,
    "shift_prob": 0.5,
    "max_shift": 10.0,
    "weight_decay": 0.0,
    "grad_clip": 0.0,
    "lr_schedule": "constant",
    "dice_eps": 1.0,
}

# Search space explored for the reported runs
SWEEP_SPACE = {
    "epochs": (100, 300, 600),
    "lr": (1e-4, 5e-5, 1e-5),
    "batch_size": (1, 2, 3),
}


# =============================================================================
# Pipeline defaults
# =============================================================================

PIPELINE_DEFAULTS = {
    "crop_depth": 32,
    "overlap": 0.25,
    "blend": "mean_probs",
    "inplane_size": (512, 512),
    "image_order": 1,
    "label_order": 0,
}

VOLUME_MAGIC = b"SVOL"
VOLUME_VERSION = 1
VOLUME_DTYPE_INTENSITY = 0
VOLUME_DTYPE_LABELS = 1
# Upper bound on any single dimension read from a header
VOLUME_MAX_DIM = 1 << 16

CHECKPOINT_MAGIC = b"SVCK"
CHECKPOINT_VERSION = 1


# =============================================================================
# Synthetic data defaults
# =============================================================================

SYNTH_DEFAULTS = {
    "dims": (64, 64, 32),
    "count": 2,
    "blobs": (2, 1, 1),
    "background": 0.08,
    "noise_std": 0.02,
    # (top fraction, bottom fraction, intensity) per retinal band
    "bands": (
        (0.30, 0.36, 0.55),
        (0.36, 0.48, 0.35),
        (0.48, 0.55, 0.65),
        (0.55, 0.62, 0.85),
    ),
    "fluid_intensity": {1: 0.02, 2: 0.16, 3: 0.28},
    "min_semi_axis": 2.0,
}


# =============================================================================
# Metric defaults
# =============================================================================

METRIC_DEFAULTS = {
    "ssim_window": 7,
    "ssim_k1": 0.01,
    "ssim_k2": 0.03,
    "ssim_range": 1.0,
}


# =============================================================================
# Gradient check defaults
# =============================================================================

GRADCHECK_DEFAULTS = {
    "rel_tol": 1e-2,
    "abs_tol": 1e-4,
    "step": 1e-3,
    "max_checks": 24,
    # end-to-end model check: tensors up to this size are checked entry by entry
    "exhaustive_size": 64,
    "model_max_checks": 16,
}


# =============================================================================
# CLI defaults
# =============================================================================

CLI_DEFAULTS = {
    "synth_out": "data/synthetic",
    "train_out": "runs/latest",
    "report": "report.txt",
}
