"""
Exception types raised across the octfluid package.

Every domain error derives from ValueError so the CLI reports them as
configuration errors (exit status 2).
"""


class ShapeError(ValueError):
    """Tensor or volume shapes are incompatible with an operation."""


class AxisError(ValueError):
    """An axis argument is out of range for the tensor it refers to."""


class UnsupportedConfig(ValueError):
    """An operation was asked for a configuration it does not implement."""


class ConfigError(ValueError):
    """Invalid or mismatched model/training configuration."""


class ChecksumError(ValueError):
    """A checkpoint failed its content hash or is truncated."""


class FormatError(ValueError):
    """A volume file does not follow the on-disk format."""


class CoverageError(ValueError):
    """Stitching finished with depth slices no crop contributed to."""


class ClassError(ValueError):
    """Unknown segmentation class id."""


class OptimizerError(ValueError):
    """The optimizer cannot update a parameter (e.g. missing gradient)."""


class NumericalError(ValueError):
    """A forward value or loss became non-finite."""
