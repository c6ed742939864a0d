#!/usr/bin/env python3
"""CLI for octfluid with task-based subcommands.

Each task (train, predict, eval, etc.) has its own subcommand with relevant options.

Examples:
  octfluid synth --seed 1 --count 4 --out data/synthetic
  octfluid train --config configs/micro.cfg --data data/synthetic/manifest.tsv --out runs/micro
  octfluid predict --ckpt runs/micro/best.svck --in scan.svol --out scan_labels.svol --preview scan.png
  octfluid gradcheck --module windowing
"""

import sys
import argparse
import logging
from typing import Any, Dict, Optional, Tuple

from octfluid import __version__
from octfluid.generators.synthetic_oct import SyntheticOCTGenerator
from octfluid.helpers.config import ModelConfig, TrainConfig, read_config_file
from octfluid.helpers.constants import (
    CLI_DEFAULTS,
    PIPELINE_DEFAULTS,
    SYNTH_DEFAULTS,
)
from octfluid.pipeline.stitching import BLEND_MODES
from octfluid.training.bench import bench
from octfluid.training.gradcheck_suite import SUITE_MODULES, run_suite
from octfluid.training.trainer import evaluate, predict, train

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


# =============================================================================
# Helper Functions
# =============================================================================


def configure_logging(args: argparse.Namespace) -> None:
    """One root handler for the whole run; --verbose wins over --quiet."""
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def load_configs(path: Optional[str]) -> Tuple[ModelConfig, TrainConfig]:
    """Configs from ``path``, or the built-in defaults when no file is given."""
    if path is None:
        return ModelConfig(), TrainConfig()
    return read_config_file(path)


def resize_arg(args: argparse.Namespace) -> Optional[Tuple[int, int]]:
    return tuple(args.resize) if getattr(args, "resize", None) else None


def inference_settings(args: argparse.Namespace) -> Tuple[Optional[ModelConfig], int, float]:
    """Expected model config plus crop depth and overlap: flags, then config file, then defaults."""
    if args.config is None:
        model_cfg = None
        crop_depth, overlap = PIPELINE_DEFAULTS["crop_depth"], PIPELINE_DEFAULTS["overlap"]
    else:
        model_cfg, train_cfg = read_config_file(args.config)
        crop_depth, overlap = train_cfg.crop_depth, train_cfg.overlap
    if args.crop_depth is not None:
        crop_depth = args.crop_depth
    if args.overlap is not None:
        overlap = args.overlap
    return model_cfg, crop_depth, overlap


# =============================================================================
# Builder Functions
# =============================================================================


def build_train_configs(args: argparse.Namespace) -> Tuple[ModelConfig, TrainConfig]:
    """Config file values, then command-line overrides."""
    model_cfg, train_cfg = load_configs(args.config)
    overrides: Dict[str, Any] = {}
    for key in ("epochs", "lr", "batch_size"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
        model_cfg = model_cfg.with_overrides(seed=args.seed)
    return model_cfg, train_cfg.with_overrides(**overrides)


def build_synth_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Build configuration for the synthetic volume generator."""
    return {
        "output_dir": args.out,
        "count": args.count,
        "dims": tuple(args.dims),
        "blobs": tuple(args.blobs),
        "noise_std": args.noise_std,
        "seed": args.seed,
        "summary": args.summary,
    }


# =============================================================================
# Dispatch Functions
# =============================================================================


def run_train(args: argparse.Namespace) -> None:
    """Execute training."""
    model_cfg, train_cfg = build_train_configs(args)
    result = train(
        args.data,
        train_cfg,
        model_cfg,
        args.out,
        resume=args.resume,
        resize=resize_arg(args),
        progress=not args.quiet,
    )

    if not args.quiet:
        print(f"\n✓ Trained {train_cfg.epochs} epochs, best loss {result.best_loss:.6f}. Output: {result.output_dir}")
        print(f"  checkpoint hash: {result.checkpoint_hash}")


def run_predict(args: argparse.Namespace) -> None:
    """Execute single-volume inference."""
    model_cfg, crop_depth, overlap = inference_settings(args)
    prediction = predict(
        args.ckpt,
        args.input,
        args.out,
        crop_depth=crop_depth,
        overlap=overlap,
        blend=args.blend,
        resize=resize_arg(args),
        preview=args.preview,
        progress=not args.quiet,
        expected_config=model_cfg,
    )

    if not args.quiet:
        counts = prediction.labels.class_counts()
        summary = ", ".join(f"{name} {count}" for name, count in counts.items())
        print(f"\n✓ Segmented {args.input} ({summary}). Output: {args.out}")


def run_eval(args: argparse.Namespace) -> None:
    """Execute evaluation over a manifest."""
    model_cfg, crop_depth, overlap = inference_settings(args)
    report = evaluate(
        args.ckpt,
        args.data,
        report_path=args.report,
        crop_depth=crop_depth,
        overlap=overlap,
        blend=args.blend,
        resize=resize_arg(args),
        progress=not args.quiet,
        expected_config=model_cfg,
    )

    if not args.quiet:
        print(report.to_text(), end="")
        print(f"\n✓ Evaluated {report.volumes} volumes. Report: {args.report}")


def run_gradcheck(args: argparse.Namespace) -> None:
    """Execute the gradient-check suite; exits 1 when any check fails."""
    seed = 0 if args.seed is None else args.seed
    reports = run_suite(args.module, seed=seed)
    for report in reports:
        print(report.summary())
    failed = [report for report in reports if not report.passed]
    if failed:
        print(f"\n{len(failed)} of {len(reports)} gradient checks failed", file=sys.stderr)
        sys.exit(1)

    if not args.quiet:
        print(f"\n✓ {len(reports)} gradient checks passed")


def run_bench(args: argparse.Namespace) -> None:
    """Execute the parameter/complexity report."""
    model_cfg, _ = load_configs(args.config)
    report = bench(model_cfg, heads=args.heads, time_forward=args.time, sweep=args.sweep)
    print(report.to_text(), end="")


def run_synth(args: argparse.Namespace) -> None:
    """Execute synthetic volume generation."""
    config = build_synth_config(args)
    generator = SyntheticOCTGenerator(config)
    pairs = generator.generate_volumes()

    if not args.quiet:
        print(f"\n✓ Generated {len(pairs)} volume/label pairs. Output: {config['output_dir']}")


# =============================================================================
# Subcommand Setup
# =============================================================================


def add_common_options(parser: argparse.ArgumentParser) -> None:
    """Add common options available to all subcommands."""
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Random seed (overrides the config file where one applies)"
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Debug logging"
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        help="Only warnings and errors; no progress bars or summaries"
    )


def add_inference_options(parser: argparse.ArgumentParser) -> None:
    """Add crop/stitch options shared by predict and eval."""
    parser.add_argument(
        "--config",
        type=str,
        default=None,
        help="Run config (e.g. config.cfg of the run); the checkpoint must match its model keys"
    )
    parser.add_argument(
        "--crop-depth",
        type=int,
        default=None,
        help=f"B-scans per inference crop (config crop_depth, else {PIPELINE_DEFAULTS['crop_depth']})"
    )
    parser.add_argument(
        "--overlap",
        type=float,
        default=None,
        help=f"Fractional overlap between neighbouring crops (config overlap, else {PIPELINE_DEFAULTS['overlap']})"
    )
    parser.add_argument(
        "--blend",
        choices=BLEND_MODES,
        default=PIPELINE_DEFAULTS["blend"],
        help="How overlapping crops are averaged"
    )
    parser.add_argument(
        "--resize",
        type=int,
        nargs=2,
        metavar=("H", "W"),
        default=None,
        help="Resample B-scans in-plane before inference (e.g. 512 512)"
    )


def setup_train_subcommand(subparsers) -> None:
    """Setup 'train' subcommand."""
    parser = subparsers.add_parser(
        "train",
        help="Train a segmentation model on a manifest of volumes",
        description="Train the fluid segmentation network with Adam on the dice loss.",
        epilog="Example: octfluid train --config configs/micro.cfg --data data/synthetic/manifest.tsv --out runs/micro",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    add_common_options(parser)

    parser.add_argument("--config", type=str, default=None, help="Config file (key = value lines)")
    parser.add_argument("--data", type=str, required=True, help="Training manifest (image<TAB>label per line)")
    parser.add_argument("--out", type=str, default=CLI_DEFAULTS["train_out"], help="Run directory")
    parser.add_argument("--resume", action="store_true", help="Continue from last.svck and train_state.npz")
    parser.add_argument("--epochs", type=int, default=None, help="Override the configured epoch count")
    parser.add_argument("--lr", type=float, default=None, help="Override the configured learning rate")
    parser.add_argument("--batch-size", type=int, default=None, help="Override the configured batch size")
    parser.add_argument(
        "--resize",
        type=int,
        nargs=2,
        metavar=("H", "W"),
        default=None,
        help="Resample B-scans in-plane when loading (e.g. 512 512)"
    )

    parser.set_defaults(func=run_train)


def setup_predict_subcommand(subparsers) -> None:
    """Setup 'predict' subcommand."""
    parser = subparsers.add_parser(
        "predict",
        help="Segment one volume with a trained checkpoint",
        description="Crop, predict and stitch a full volume into a label volume.",
        epilog="Example: octfluid predict --ckpt runs/micro/best.svck --in scan.svol --out labels.svol",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    add_common_options(parser)
    add_inference_options(parser)

    parser.add_argument("--ckpt", type=str, required=True, help="Checkpoint (.svck)")
    parser.add_argument("--in", dest="input", type=str, required=True, help="Input intensity volume (.svol)")
    parser.add_argument("--out", type=str, required=True, help="Output label volume (.svol)")
    parser.add_argument("--preview", type=str, default=None, help="Also save a PNG of the middle B-scan")

    parser.set_defaults(func=run_predict)


def setup_eval_subcommand(subparsers) -> None:
    """Setup 'eval' subcommand."""
    parser = subparsers.add_parser(
        "eval",
        help="Score a checkpoint against labelled volumes",
        description="Predict every volume of a manifest and report dice, IoU and SSIM.",
        epilog="Example: octfluid eval --ckpt runs/micro/best.svck --data data/val.tsv --report report.txt",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    add_common_options(parser)
    add_inference_options(parser)

    parser.add_argument("--ckpt", type=str, required=True, help="Checkpoint (.svck)")
    parser.add_argument("--data", type=str, required=True, help="Evaluation manifest")
    parser.add_argument("--report", type=str, default=CLI_DEFAULTS["report"], help="Report path (a CSV goes next to it)")

    parser.set_defaults(func=run_eval)


def setup_gradcheck_subcommand(subparsers) -> None:
    """Setup 'gradcheck' subcommand."""
    parser = subparsers.add_parser(
        "gradcheck",
        help="Compare analytic gradients with finite differences",
        description="Run the randomised gradient checks for one area or all of them.",
        epilog="Example: octfluid gradcheck --module blocks",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    add_common_options(parser)

    parser.add_argument(
        "--module",
        choices=SUITE_MODULES + ("all",),
        default="all",
        help="Area to check"
    )

    parser.set_defaults(func=run_gradcheck)


def setup_bench_subcommand(subparsers) -> None:
    """Setup 'bench' subcommand."""
    parser = subparsers.add_parser(
        "bench",
        help="Parameter counts and attention cost for a config",
        description="Report parameters of the four ablation variants and attention score-entry counts.",
        epilog="Example: octfluid bench --config configs/desk.cfg --sweep",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    add_common_options(parser)

    parser.add_argument("--config", type=str, default=None, help="Config file (model keys are used)")
    parser.add_argument("--heads", type=int, default=1, help="Heads used when counting attention scores")
    parser.add_argument("--time", action="store_true", help="Also time one forward pass")
    parser.add_argument("--sweep", action="store_true", help="List the hyper-parameter search space")

    parser.set_defaults(func=run_bench)


def setup_synth_subcommand(subparsers) -> None:
    """Setup 'synth' subcommand."""
    parser = subparsers.add_parser(
        "synth",
        help="Generate synthetic OCT volumes with fluid labels",
        description="Write layered synthetic volumes with ellipsoidal IRF/SRF/PED blobs and a manifest.",
        epilog="Example: octfluid synth --seed 1 --count 4 --out data/synthetic",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    add_common_options(parser)

    parser.add_argument("--count", type=int, default=SYNTH_DEFAULTS["count"], help="Number of volumes")
    parser.add_argument("--out", type=str, default=CLI_DEFAULTS["synth_out"], help="Output directory")
    parser.add_argument(
        "--dims",
        type=int,
        nargs=3,
        metavar=("H", "W", "C"),
        default=list(SYNTH_DEFAULTS["dims"]),
        help="Volume dims (height, width, B-scans)"
    )
    parser.add_argument(
        "--blobs",
        type=int,
        nargs=3,
        metavar=("IRF", "SRF", "PED"),
        default=list(SYNTH_DEFAULTS["blobs"]),
        help="Blob count per fluid class"
    )
    parser.add_argument("--noise-std", type=float, default=SYNTH_DEFAULTS["noise_std"], help="Gaussian noise level")
    parser.add_argument("--summary", action="store_true", help="Also write summary.csv with voxel counts")

    parser.set_defaults(func=run_synth)


# =============================================================================
# Main Parser Setup
# =============================================================================


def create_parser() -> argparse.ArgumentParser:
    """Create the main argument parser with subcommands."""
    parser = argparse.ArgumentParser(
        prog="octfluid",
        description="Segment retinal fluid in 3D OCT volumes with a shifted-window transformer",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Available tasks:
  train       Train on a manifest of volume/label pairs
  predict     Segment one volume
  eval        Dice / IoU / SSIM report over a manifest
  gradcheck   Finite-difference gradient checks
  bench       Parameter counts and attention cost
  synth       Synthetic volumes with fluid blobs

Examples:
  octfluid synth --count 4 --out data/synthetic
  octfluid train --config configs/micro.cfg --data data/synthetic/manifest.tsv
  octfluid eval --ckpt runs/latest/best.svck --data data/synthetic/manifest.tsv

For help on a specific task:
  octfluid <task> --help
        """,
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"octfluid {__version__}"
    )

    subparsers = parser.add_subparsers(
        title="tasks",
        description="Available tasks",
        dest="task",
        required=False,
    )

    setup_train_subcommand(subparsers)
    setup_predict_subcommand(subparsers)
    setup_eval_subcommand(subparsers)
    setup_gradcheck_subcommand(subparsers)
    setup_bench_subcommand(subparsers)
    setup_synth_subcommand(subparsers)

    return parser


# =============================================================================
# Validation & Execution
# =============================================================================


def validate_and_adjust_args(args: argparse.Namespace) -> None:
    """Reject argument combinations argparse cannot express."""
    crop_depth = getattr(args, "crop_depth", None)
    if crop_depth is not None and crop_depth < 1:
        raise ValueError(f"--crop-depth must be >= 1, got {crop_depth}")
    overlap = getattr(args, "overlap", None)
    if overlap is not None and not 0.0 <= overlap < 1.0:
        raise ValueError(f"--overlap must lie in [0, 1), got {args.overlap}")
    if getattr(args, "resize", None) and min(args.resize) < 1:
        raise ValueError(f"--resize needs positive sizes, got {args.resize}")
    if args.task == "synth" and args.count < 1:
        raise ValueError(f"--count must be >= 1, got {args.count}")


# =============================================================================
# Main Entry Point
# =============================================================================


def main() -> None:
    """Main CLI entry point."""
    try:
        parser = create_parser()
        args = parser.parse_args()

        # If no task specified, show help
        if not hasattr(args, "func"):
            parser.print_help()
            sys.exit(0)

        configure_logging(args)
        validate_and_adjust_args(args)

        args.func(args)

    except KeyboardInterrupt:
        print("\n\nInterrupted by user")
        sys.exit(130)
    except ValueError as e:
        print(f"\nConfiguration error: {e}", file=sys.stderr)
        sys.exit(2)
    except Exception as e:
        print(f"\nError: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
