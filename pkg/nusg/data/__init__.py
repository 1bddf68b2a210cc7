from .dataset import (
    MEAN,
    STD,
    MASK_THRESHOLD,
    DatasetError,
    SampleRecord,
    scan_dataset,
    split,
    read_image,
    read_mask,
    normalize,
    denormalize,
    binarize_mask,
    load_sample,
    write_probability_png,
)
from .augment import AugmentPolicy, augment, sample_rng
from .loader import Batch, BatchLoader, thread_limit

__all__ = [
    "MEAN",
    "STD",
    "MASK_THRESHOLD",
    "DatasetError",
    "SampleRecord",
    "scan_dataset",
    "split",
    "read_image",
    "read_mask",
    "normalize",
    "denormalize",
    "binarize_mask",
    "load_sample",
    "write_probability_png",
    "AugmentPolicy",
    "augment",
    "sample_rng",
    "Batch",
    "BatchLoader",
    "thread_limit",
]
