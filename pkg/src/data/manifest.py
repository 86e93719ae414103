"""
Dataset manifests.

A manifest lists (hazy, clean) samples with a split assignment and is stored as
line-oriented text::

    split<TAB>hazy_path<TAB>[clean_path]

Paths are written relative to the manifest's directory whenever possible, so a
dataset folder can be moved as a whole.
"""
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..utils.exceptions import DataError, DimensionError, ParameterError
from .image_io import load_image

MANIFEST_NAME = "manifest.txt"
HAZY_DIR = "hazy"
CLEAN_DIR = "gt"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class ManifestRecord:
    """One sample: a hazy image, its clean counterpart if any, and its split."""
    split: Split
    hazy_path: str
    clean_path: Optional[str] = None

    @property
    def sample_id(self) -> str:
        return os.path.splitext(os.path.basename(self.hazy_path))[0]


def split_counts(total: int, fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> Tuple[int, int, int]:
    """
    Number of train/val/test items for `total` items.

    Train and val are rounded, test takes the remainder, so the three always
    add up to `total`.
    """
    if total < 0:
        raise ParameterError(f"total must be >= 0, got {total}")
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must be three non-negative values summing to 1, got {fractions}")
    n_train = int(round(total * fractions[0]))
    n_val = min(total - n_train, int(round(total * fractions[1])))
    return n_train, n_val, total - n_train - n_val


def assign_splits(total: int, fractions: Sequence[float] = (0.8, 0.1, 0.1)) -> List[Split]:
    """Split labels for items 0..total-1 in order (train first, then val, then test)."""
    n_train, n_val, n_test = split_counts(total, fractions)
    return [Split.TRAIN] * n_train + [Split.VAL] * n_val + [Split.TEST] * n_test


@dataclass
class DatasetManifest:
    """
    Paired or unpaired sample listing.

    Attributes:
        samples: Records in file order.
        paired: True when every record carries a clean path.
        root: Directory that relative paths are resolved against.
    """
    samples: List[ManifestRecord] = field(default_factory=list)
    paired: bool = True
    root: str = "."

    def __post_init__(self):
        self.logger = logging.getLogger(__name__)

    def __len__(self) -> int:
        return len(self.samples)

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.root, path))

    def split(self, name) -> List[ManifestRecord]:
        """Records of one split."""
        split = Split(name)
        return [r for r in self.samples if r.split == split]

    def split_sizes(self) -> Dict[str, int]:
        return {s.value: len(self.split(s)) for s in Split}

    def validate(self, check_files: bool = False) -> None:
        """
        Check the manifest invariants.

        Paired manifests need a clean path on every record, and no hazy path may
        appear in two splits. With `check_files`, every referenced image is
        decoded and paired members must have identical dimensions.
        """
        seen: Dict[str, Split] = {}
        for record in self.samples:
            if self.paired and not record.clean_path:
                raise DataError(f"paired manifest record without clean path: {record.hazy_path}")
            previous = seen.get(record.hazy_path)
            if previous is not None and previous != record.split:
                raise DataError(f"{record.hazy_path} appears in splits {previous.value} and {record.split.value}")
            seen[record.hazy_path] = record.split

        if check_files:
            for record in self.samples:
                hazy = load_image(self.resolve(record.hazy_path))
                if record.clean_path:
                    clean = load_image(self.resolve(record.clean_path))
                    if clean.shape != hazy.shape:
                        raise DimensionError(
                            f"{record.hazy_path} is {hazy.shape[:2]} but {record.clean_path} is {clean.shape[:2]}"
                        )

    def save(self, path: str) -> str:
        """Write the manifest as tab-separated lines; returns the path."""
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)

        def rel(p: str) -> str:
            full = self.resolve(p)
            try:
                return os.path.relpath(full, directory)
            except ValueError:
                return full

        with open(path, "w", encoding="utf-8") as f:
            for record in self.samples:
                fields = [record.split.value, rel(record.hazy_path)]
                if record.clean_path:
                    fields.append(rel(record.clean_path))
                f.write("\t".join(fields) + "\n")
        self.logger.info(f"Wrote manifest with {len(self.samples)} samples to {path}")
        return path

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        """Read a manifest written by `save`."""
        if not os.path.isfile(path):
            raise FileNotFoundError(f"Manifest not found: {path}")
        records: List[ManifestRecord] = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) not in (2, 3):
                    raise DataError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
                try:
                    split = Split(parts[0])
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: unknown split {parts[0]!r}") from e
                clean = parts[2] if len(parts) == 3 and parts[2] else None
                records.append(ManifestRecord(split, parts[1], clean))
        paired = bool(records) and all(r.clean_path for r in records)
        manifest = cls(records, paired=paired, root=os.path.dirname(os.path.abspath(path)))
        manifest.validate()
        return manifest

    @classmethod
    def from_directory(
        cls,
        root: str,
        paired: bool = True,
        fractions: Sequence[float] = (0.8, 0.1, 0.1),
    ) -> "DatasetManifest":
        """
        Build a manifest from `<root>/hazy/*.png` (and `<root>/gt/*.png` when paired).

        Pairs are matched by file stem. Splits are assigned in sorted stem order.
        """
        hazy_dir = os.path.join(root, HAZY_DIR)
        if not os.path.isdir(hazy_dir):
            raise FileNotFoundError(f"No hazy/ directory under {root}")
        stems = sorted(os.path.splitext(f)[0] for f in os.listdir(hazy_dir) if f.lower().endswith(".png"))
        if not stems:
            raise DataError(f"No PNG files in {hazy_dir}")

        records = []
        for stem, split in zip(stems, assign_splits(len(stems), fractions)):
            clean = None
            if paired:
                clean = os.path.join(CLEAN_DIR, stem + ".png")
                if not os.path.isfile(os.path.join(root, clean)):
                    raise DataError(f"Missing ground truth for {stem} in {os.path.join(root, CLEAN_DIR)}")
            records.append(ManifestRecord(split, os.path.join(HAZY_DIR, stem + ".png"), clean))
        return cls(records, paired=paired, root=os.path.abspath(root))

    @classmethod
    def from_records(cls, records: Iterable[ManifestRecord], root: str, paired: Optional[bool] = None) -> "DatasetManifest":
        records = list(records)
        if paired is None:
            paired = bool(records) and all(r.clean_path for r in records)
        manifest = cls(records, paired=paired, root=os.path.abspath(root))
        manifest.validate()
        return manifest
