import logging
import os

import numpy as np
import pytest

from src.data.manifest import DatasetManifest
from src.dehaze.classical import BccrParams
from src.models.network import build_model, parameter_hash
from src.physics.priors import dark_channel
from src.training.pseudo_labels import (
    COARSE_DIR,
    Provenance,
    generate_pseudo_gt,
    load_provenance,
    load_pseudo_pairs,
)
from src.utils.exceptions import DataError

logger = logging.getLogger(__name__)


@pytest.fixture
def bccr():
    return BccrParams(iters=3)


def test_pseudo_pairs_layout_and_provenance(tmp_path, tiny_model_config, synthetic_manifest, bccr):
    model = build_model(tiny_model_config, seed=0)
    out = str(tmp_path / "pseudo")
    pairs = generate_pseudo_gt(model, synthetic_manifest, bccr, out, checkpoint_path="ckpt.pt")

    train = synthetic_manifest.split("train")
    assert len(pairs) == len(train)
    manifest = DatasetManifest.load(os.path.join(out, "manifest.txt"))
    assert manifest.paired
    assert manifest.split_sizes() == {'train': len(train), 'val': 0, 'test': 0}
    manifest.validate(check_files=True)

    for pair, record in zip(pairs, train):
        assert pair.hazy.shape == pair.pseudo_gt.shape
        assert os.path.isfile(os.path.join(out, COARSE_DIR, record.sample_id + ".png"))
        provenance = load_provenance(out, record.sample_id)
        assert provenance.coarse_checkpoint_id == parameter_hash(model)
        assert provenance.bccr_params_hash == bccr.params_hash()
        assert provenance.coarse_checkpoint_path == "ckpt.pt"


def test_refinement_lowers_dark_channel(tmp_path, tiny_model_config, synthetic_manifest, bccr):
    pairs = generate_pseudo_gt(build_model(tiny_model_config, seed=0), synthetic_manifest, bccr, str(tmp_path))
    refined = np.mean([dark_channel(p.pseudo_gt, bccr.airlight_patch).mean() for p in pairs])
    coarse = np.mean([dark_channel(p.coarse, bccr.airlight_patch).mean() for p in pairs])
    assert refined <= coarse


def test_pairs_read_back(tmp_path, tiny_model_config, synthetic_manifest, bccr):
    out = str(tmp_path)
    written = generate_pseudo_gt(build_model(tiny_model_config, seed=0), synthetic_manifest, bccr, out, split=None)
    assert len(written) == len(synthetic_manifest)
    restored = load_pseudo_pairs(out)
    assert len(restored) == len(written)
    for a, b in zip(written, restored):
        assert np.max(np.abs(a.pseudo_gt - b.pseudo_gt)) <= 1 / 510 + 1e-9
        assert b.coarse is not None
        assert a.provenance == b.provenance


def test_empty_split_and_bad_provenance(tmp_path, tiny_model_config):
    empty = DatasetManifest.from_records([], str(tmp_path))
    with pytest.raises(DataError):
        generate_pseudo_gt(build_model(tiny_model_config, seed=0), empty, None, str(tmp_path / "out"))
    with pytest.raises(DataError):
        Provenance("", "abc")
    with pytest.raises(FileNotFoundError):
        load_provenance(str(tmp_path), "nothing")
