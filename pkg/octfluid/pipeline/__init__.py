"""Volume I/O, training crops, augmentation and stitched inference."""

from octfluid.pipeline.volume import LabelVolume, Vendor, Volume, read_pair, read_volume, resize_inplane, write_volume
from octfluid.pipeline.sampling import TrainingCrop, augment, intensity_shift, sample_training_crop
from octfluid.pipeline.stitching import Prediction, StitchAccumulator, finalize, predict_volume, stitch

__all__ = [
    "LabelVolume",
    "Vendor",
    "Volume",
    "read_pair",
    "read_volume",
    "resize_inplane",
    "write_volume",
    "TrainingCrop",
    "augment",
    "intensity_shift",
    "sample_training_crop",
    "Prediction",
    "StitchAccumulator",
    "finalize",
    "predict_volume",
    "stitch",
]
