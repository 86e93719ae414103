import os
import sys

import numpy as np
import pytest

# Make `src` importable when pytest is run from anywhere
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs a full (if tiny) training stage")


TINY_MODEL = [
    "model.base_width=8",
    "model.num_scales=2",
    "model.blocks_per_scale=1",
    "model.decoder_blocks_per_scale=1",
    "model.bottleneck_blocks=1",
    "model.heads=2",
    "model.embed_dim=16",
    "model.mlp_hidden=16",
    "model.pos_grid=4",
    "priors.patch=3",
]

TINY_TRAINING = [
    f"{stage}.{key}"
    for stage in ("pretrain", "unsupervised", "finetune")
    for key in ("batch=2", "crop=16", "steps=2", "checkpoint_every=1", "log_every=1", "cycle_step=1")
] + ["unsupervised_loss.loss_size=16", "unsupervised_loss.exp_region=4", "unsupervised_loss.spa_region=2"]


@pytest.fixture(autouse=True)
def isolated_error_reports(tmp_path, monkeypatch):
    """Keep error_<id>.json reports out of the project's logs/ directory."""
    from src.utils.error_logger import ErrorLogger

    log_dir = str(tmp_path / "logs")
    monkeypatch.setattr(ErrorLogger, "LOG_DIR", log_dir)
    monkeypatch.setattr(ErrorLogger, "LOG_FILE", os.path.join(log_dir, "nighthaze.log"))
    return log_dir


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_settings():
    """Default settings shrunk to a model and loaders that run in well under a second per step."""
    from src.config import apply_overrides, default_settings

    return apply_overrides(default_settings(), TINY_MODEL + TINY_TRAINING + ["bccr.iters=2"])


@pytest.fixture
def tiny_model_config(tiny_settings):
    from src.config import model_config

    return model_config(tiny_settings)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    """A five-scene synthetic dataset of 32x32 pairs: three train, one val, one test."""
    from src.synthesis.haze_synth import SceneRanges, generate_dataset

    root = str(tmp_path_factory.mktemp("synthetic"))
    generate_dataset(
        5,
        root,
        SceneRanges(size=(32, 32), num_lights=(1, 2)),
        seed=7,
        fractions=(0.6, 0.2, 0.2),
        show_progress=False,
    )
    return root


@pytest.fixture
def synthetic_manifest(synthetic_root):
    from src.data.manifest import MANIFEST_NAME, DatasetManifest

    return DatasetManifest.load(os.path.join(synthetic_root, MANIFEST_NAME))


@pytest.fixture
def hazy_scene():
    """A 24x24 night scene with one light, hazed with a known transmission."""
    from src.synthesis.haze_synth import SceneSpec, compose_haze, render_clean_scene, sample_lights

    spec = SceneSpec(seed=3, size=(24, 24), num_lights=1, haze_beta=1.0, ambient=0.08)
    clean, depth = render_clean_scene(spec)
    hazy = compose_haze(clean, depth, spec, sample_lights(spec))
    return hazy, clean
