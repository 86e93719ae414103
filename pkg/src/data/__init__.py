"""
Data package for nighthaze.

This package contains the image representation and PNG I/O, dataset manifests
and the deterministic training sample streams.
"""

from .image_io import (
    ImageRGB,
    ImageGray,
    load_image,
    save_image,
    save_gray,
    random_overlap_crops,
    augment,
    to_tensor,
    to_image,
)
from .manifest import DatasetManifest, ManifestRecord, Split, split_counts

__all__ = [
    'ImageRGB',
    'ImageGray',
    'load_image',
    'save_image',
    'save_gray',
    'random_overlap_crops',
    'augment',
    'to_tensor',
    'to_image',
    'DatasetManifest',
    'ManifestRecord',
    'Split',
    'split_counts',
]
