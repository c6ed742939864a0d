"""Dataset generators."""

from octfluid.generators.synthetic_oct import SyntheticOCTGenerator, draw_ellipsoid_mask, generate_synthetic

__all__ = [
    "SyntheticOCTGenerator",
    "draw_ellipsoid_mask",
    "generate_synthetic",
]
