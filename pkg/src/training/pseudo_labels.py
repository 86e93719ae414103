"""
Pseudo ground truths for unlabeled real images.

Each real hazy image is dehazed by the adapted network (the coarse result) and
the coarse result is refined with BCCR. The refined image becomes the
pseudo-GT of the original hazy image. Output layout::

    out_root/hazy/<stem>.png         copy of the real hazy input
    out_root/gt/<stem>.png           pseudo ground truth
    out_root/coarse/<stem>.png       network output before refinement
    out_root/provenance/<stem>.json  which checkpoint and BCCR parameters made it
    out_root/manifest.txt            paired manifest, all records in the train split
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import torch
from tqdm import tqdm

from ..data.image_io import ImageRGB, load_image, save_image, to_image, to_tensor
from ..data.manifest import CLEAN_DIR, HAZY_DIR, MANIFEST_NAME, DatasetManifest, ManifestRecord, Split
from ..dehaze.classical import BccrParams, dehaze_bccr
from ..models.network import PriorQueryTransformer, parameter_hash
from ..utils.error_logger import ErrorLogger
from ..utils.exceptions import DataError
from ..version import __version__

logger = logging.getLogger(__name__)

COARSE_DIR = "coarse"
PROVENANCE_DIR = "provenance"


@dataclass(frozen=True)
class Provenance:
    """Identifies the exact coarse model and BCCR parameters behind a pseudo-GT."""
    coarse_checkpoint_id: str
    bccr_params_hash: str
    coarse_checkpoint_path: str = ""
    app_version: str = __version__

    def __post_init__(self):
        if not self.coarse_checkpoint_id or not self.bccr_params_hash:
            raise DataError("provenance needs a checkpoint id and a BCCR parameter hash")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'coarse_checkpoint_id': self.coarse_checkpoint_id,
            'bccr_params_hash': self.bccr_params_hash,
            'coarse_checkpoint_path': self.coarse_checkpoint_path,
            'app_version': self.app_version,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Provenance':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class PseudoPair:
    """A real hazy image with its pseudo ground truth."""
    hazy: ImageRGB
    pseudo_gt: ImageRGB
    provenance: Provenance
    hazy_path: str = ""
    gt_path: str = ""
    coarse: Optional[ImageRGB] = None

    def __post_init__(self):
        if self.hazy.shape != self.pseudo_gt.shape:
            raise DataError(f"pseudo pair shapes differ: {self.hazy.shape} vs {self.pseudo_gt.shape}")


def coarse_dehaze(model: PriorQueryTransformer, img: ImageRGB) -> ImageRGB:
    """Run the network on one image in inference mode."""
    model.eval()
    with torch.no_grad():
        return to_image(model(to_tensor(img)))


def generate_pseudo_gt(
    model: PriorQueryTransformer,
    manifest: DatasetManifest,
    bccr: Optional[BccrParams],
    out_root: str,
    checkpoint_path: str = "",
    split: Optional[str] = "train",
    show_progress: bool = False,
) -> List[PseudoPair]:
    """
    Make pseudo pairs for the hazy images of `manifest`.

    Args:
        model: The unsupervised-adapted network
        manifest: Real-image manifest (clean paths are ignored)
        bccr: Refinement parameters; None uses the defaults
        out_root: Output directory
        checkpoint_path: Checkpoint the model was loaded from, recorded in provenance
        split: Split to label; None labels every record

    Returns:
        List[PseudoPair]: One pair per labeled record, in manifest order

    Raises:
        DataError: The selected split is empty
    """
    bccr = bccr or BccrParams()
    records = manifest.samples if split is None else manifest.split(split)
    if not records:
        raise DataError(f"no hazy images to label in split {split!r}")

    provenance = Provenance(parameter_hash(model), bccr.params_hash(), checkpoint_path)
    for sub in (HAZY_DIR, CLEAN_DIR, COARSE_DIR, PROVENANCE_DIR):
        os.makedirs(os.path.join(out_root, sub), exist_ok=True)

    pairs: List[PseudoPair] = []
    new_records: List[ManifestRecord] = []
    try:
        for record in tqdm(records, desc="pseudo-gt", disable=not show_progress, leave=False):
            source = manifest.resolve(record.hazy_path)
            stem = record.sample_id
            hazy = load_image(source)
            coarse = coarse_dehaze(model, hazy)
            pseudo_gt = dehaze_bccr(coarse, bccr)

            hazy_path = os.path.join(out_root, HAZY_DIR, stem + ".png")
            gt_path = os.path.join(out_root, CLEAN_DIR, stem + ".png")
            save_image(hazy, hazy_path)
            save_image(pseudo_gt, gt_path)
            save_image(coarse, os.path.join(out_root, COARSE_DIR, stem + ".png"))
            with open(os.path.join(out_root, PROVENANCE_DIR, stem + ".json"), "w", encoding="utf-8") as f:
                json.dump(dict(provenance.to_dict(), sample_id=stem, source=source), f, indent=2)

            pairs.append(PseudoPair(hazy, pseudo_gt, provenance, hazy_path, gt_path, coarse))
            new_records.append(
                ManifestRecord(Split.TRAIN, os.path.join(HAZY_DIR, stem + ".png"), os.path.join(CLEAN_DIR, stem + ".png"))
            )

        DatasetManifest.from_records(new_records, out_root, paired=True).save(os.path.join(out_root, MANIFEST_NAME))
    except Exception as e:
        ErrorLogger.log_error(e, {'action': 'generate_pseudo_gt', 'out_root': out_root, 'done': len(pairs)})
        raise

    logger.info(f"Generated {len(pairs)} pseudo pairs in {out_root} from checkpoint {provenance.coarse_checkpoint_id[:12]}")
    return pairs


def load_provenance(out_root: str, stem: str) -> Provenance:
    path = os.path.join(out_root, PROVENANCE_DIR, stem + ".json")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Provenance record not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return Provenance.from_dict(json.load(f))


def load_pseudo_pairs(out_root: str) -> List[PseudoPair]:
    """Read back the pairs written by generate_pseudo_gt."""
    manifest = DatasetManifest.load(os.path.join(out_root, MANIFEST_NAME))
    if not manifest.paired:
        raise DataError(f"{out_root} does not hold a paired pseudo-label manifest")
    pairs = []
    for record in manifest.samples:
        hazy_path = manifest.resolve(record.hazy_path)
        gt_path = manifest.resolve(record.clean_path)
        coarse_path = os.path.join(out_root, COARSE_DIR, record.sample_id + ".png")
        pairs.append(
            PseudoPair(
                hazy=load_image(hazy_path),
                pseudo_gt=load_image(gt_path),
                provenance=load_provenance(out_root, record.sample_id),
                hazy_path=hazy_path,
                gt_path=gt_path,
                coarse=load_image(coarse_path) if os.path.isfile(coarse_path) else None,
            )
        )
    return pairs
