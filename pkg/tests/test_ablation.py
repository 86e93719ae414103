import logging
import os

import pandas as pd
import pytest

from src.training.ablation import AXES, OVERRIDES, resolve_variants, run_ablation, run_variant, variant_stages
from src.utils.exceptions import ParameterError

logger = logging.getLogger(__name__)


def test_every_variant_has_overrides():
    for variants in AXES.values():
        assert all(v in OVERRIDES for v in variants)


def test_variant_stages():
    assert variant_stages("no_priors") == ("pretrain",)
    assert variant_stages("no_spa") == ("pretrain", "unsupervised")
    assert variant_stages("setting_ii") == ("pretrain", "unsupervised")
    assert variant_stages("setting_iii") == ("pretrain", "unsupervised", "finetune")


def test_resolve_variants():
    assert resolve_variants("priors") == ["no_priors", "q_dcp_only", "q_bcp_only", "full"]
    assert resolve_variants("vitblock") == ["vitblock"]
    with pytest.raises(ParameterError):
        resolve_variants("dropout")
    with pytest.raises(ParameterError):
        run_variant("dropout", {}, None, "unused")


@pytest.mark.slow
def test_priors_axis_table(tmp_path, tiny_settings, synthetic_manifest):
    table_path = str(tmp_path / "priors.tsv")
    table = run_ablation("priors", tiny_settings, synthetic_manifest, str(tmp_path / "runs"), table_path=table_path)
    assert list(table["variant"]) == list(AXES["priors"])
    assert list(table.columns) == ["variant", "stages", "psnr", "ssim", "parameters", "parameter_hash"]
    assert table["parameter_hash"].nunique() == len(table)
    # prior modes change the queries, not the architecture
    assert table["parameters"].nunique() == 1
    for variant in AXES["priors"]:
        assert os.path.isdir(tmp_path / "runs" / variant / "pretrain")

    written = pd.read_csv(table_path, sep="\t")
    assert list(written["variant"]) == list(AXES["priors"])


@pytest.mark.slow
def test_variant_is_deterministic(tmp_path, tiny_settings, synthetic_manifest):
    first = run_variant("no_latent", tiny_settings, synthetic_manifest, str(tmp_path / "a"))
    second = run_variant("no_latent", tiny_settings, synthetic_manifest, str(tmp_path / "b"))
    assert first == second


@pytest.mark.slow
def test_full_pipeline_variant(tmp_path, tiny_settings, synthetic_manifest):
    row = run_variant("setting_iii", tiny_settings, synthetic_manifest, str(tmp_path))
    assert row["stages"] == "pretrain+unsupervised+finetune"
    assert os.path.isfile(tmp_path / "setting_iii" / "pseudo" / "manifest.txt")
    assert os.path.isdir(tmp_path / "setting_iii" / "finetune" / "checkpoints")
