"""
Training sample streams.

A TrainingStream is an indexable torch Dataset whose item k is a pure function
of (seed, k): which record is used, where it is cropped and how it is
augmented are all drawn from a generator seeded with (seed, k). The order of
samples therefore does not depend on how many DataLoader workers prefetch them.
"""
import logging
import threading
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from ..utils.exceptions import DataError, ParameterError
from .image_io import augment, crop_offsets, load_image
from .manifest import DatasetManifest

SamplePaths = Tuple[str, Optional[str]]


def records_for(manifest: DatasetManifest, split: Optional[str] = "train", paired: bool = True) -> List[SamplePaths]:
    """Resolved (hazy, clean) paths of one split; clean is None when `paired` is False."""
    records = manifest.samples if split is None else manifest.split(split)
    if paired and not manifest.paired:
        raise DataError("a paired manifest is required")
    return [
        (manifest.resolve(r.hazy_path), manifest.resolve(r.clean_path) if paired and r.clean_path else None)
        for r in records
    ]


class ImageCache:
    """Small FIFO cache of decoded images shared by the items of one stream."""

    def __init__(self, cache_size: int = 64):
        self.cache_size = cache_size
        self._images: Dict[str, np.ndarray] = {}
        self._lock = threading.RLock()

    def get(self, path: str) -> np.ndarray:
        with self._lock:
            if path in self._images:
                return self._images[path]
        image = load_image(path)
        with self._lock:
            if len(self._images) >= self.cache_size:
                self._images.pop(next(iter(self._images)))
            self._images[path] = image
        return image


class TrainingStream(Dataset):
    """
    Deterministic stream of (hazy[, clean]) training crops.

    Args:
        samples: Primary (hazy, clean) paths; clean may be None for unpaired data.
        length: Number of items (steps * batch).
        crop: Crop size in pixels; 0 keeps whole images.
        seed: Stream seed.
        use_augment: Apply the dihedral augmentation.
        mix_samples: Optional second pool (synthetic pairs during fine-tuning).
        mix_ratio: Probability of drawing an item from `mix_samples`.
    """

    def __init__(
        self,
        samples: Sequence[SamplePaths],
        length: int,
        crop: int,
        seed: int,
        use_augment: bool = True,
        mix_samples: Optional[Sequence[SamplePaths]] = None,
        mix_ratio: float = 0.0,
        cache_size: int = 64,
    ):
        if not samples:
            raise DataError("training stream has no samples")
        if not 0.0 <= mix_ratio <= 1.0:
            raise ParameterError(f"mix_ratio must lie in [0, 1], got {mix_ratio}")
        if mix_ratio > 0 and not mix_samples:
            raise DataError("mix_ratio > 0 needs a second sample pool")
        self.samples = list(samples)
        self.mix_samples = list(mix_samples or [])
        self.mix_ratio = mix_ratio
        self.length = int(length)
        self.crop = int(crop)
        self.seed = int(seed)
        self.use_augment = use_augment
        self.paired = all(clean is not None for _, clean in self.samples)
        if self.mix_samples and self.paired != all(c is not None for _, c in self.mix_samples):
            raise DataError("both sample pools must be paired or both unpaired")
        self.cache = ImageCache(cache_size)
        self.logger = logging.getLogger(__name__)

    def __len__(self) -> int:
        return self.length

    def _pick(self, rng: np.random.Generator) -> SamplePaths:
        pool = self.samples
        if self.mix_samples and rng.random() < self.mix_ratio:
            pool = self.mix_samples
        return pool[int(rng.integers(0, len(pool)))]

    def __getitem__(self, k: int) -> Dict[str, torch.Tensor]:
        if k < 0 or k >= self.length:
            raise IndexError(k)
        rng = np.random.default_rng([self.seed, int(k)])
        hazy_path, clean_path = self._pick(rng)
        hazy = self.cache.get(hazy_path)
        clean = self.cache.get(clean_path) if clean_path else None

        if self.crop > 0:
            (y, x), = crop_offsets(hazy.shape[:2], self.crop, 1, int(rng.integers(0, 2**31 - 1)))
            hazy = hazy[y:y + self.crop, x:x + self.crop]
            if clean is not None:
                clean = clean[y:y + self.crop, x:x + self.crop]
        if self.use_augment:
            hazy, clean = augment(hazy, clean, seed=int(rng.integers(0, 2**31 - 1)))

        item = {"hazy": torch.from_numpy(np.ascontiguousarray(hazy.transpose(2, 0, 1))).float()}
        if clean is not None:
            item["clean"] = torch.from_numpy(np.ascontiguousarray(clean.transpose(2, 0, 1))).float()
        return item


def make_loader(stream: TrainingStream, batch: int, num_workers: int = 0) -> DataLoader:
    """Sequential loader; order is fixed by the stream, never shuffled."""
    return DataLoader(stream, batch_size=batch, shuffle=False, drop_last=True, num_workers=num_workers)
