import logging
import os
import sys

import numpy as np
import pytest

from src.cli import main
from src.config import save_settings
from src.data.image_io import save_image
from src.data.manifest import DatasetManifest
from src.utils.exceptions import NumericGuardError

logger = logging.getLogger(__name__)


@pytest.fixture(autouse=True)
def restore_logging():
    """main() installs root handlers and an excepthook; undo both after each test."""
    hook = sys.excepthook
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_nighthaze", False):
            root.removeHandler(handler)
            handler.close()
    sys.excepthook = hook


@pytest.fixture
def cli(tmp_path, tiny_settings, capsys):
    """Run the command line with the tiny settings file; returns (status, stdout, stderr)."""
    config = save_settings(tiny_settings, str(tmp_path / "tiny.ini"))

    def run(*argv):
        status = main(["--config", config, "--log-dir", str(tmp_path / "logs"), *argv])
        out, err = capsys.readouterr()
        return status, out, err

    return run


def _synth(cli, out):
    return cli("--set", "synth.size=32, 32", "--set", "synth.fractions=0.6, 0.2, 0.2", "synth", "--out", out, "--count", "5", "--seed", "7")


def test_synth_writes_dataset(cli, tmp_path):
    status, out, _ = _synth(cli, str(tmp_path / "syn"))
    assert status == 0
    assert "wrote 5 pairs" in out
    manifest = DatasetManifest.load(str(tmp_path / "syn" / "manifest.txt"))
    assert manifest.split_sizes() == {'train': 3, 'val': 1, 'test': 1}
    assert os.path.isfile(tmp_path / "logs" / "nighthaze.log")


def test_classical_dehaze_and_evaluate(cli, tmp_path):
    _synth(cli, str(tmp_path / "syn"))
    manifest = DatasetManifest.load(str(tmp_path / "syn" / "manifest.txt"))
    source = manifest.resolve(manifest.samples[0].hazy_path)

    for method in ("bccr", "dcp"):
        target = str(tmp_path / f"{method}.png")
        status, out, _ = cli("dehaze", "--method", method, "--patch", "5", source, target)
        assert status == 0 and out.strip() == target
        assert os.path.isfile(target)

    table = str(tmp_path / "eval.tsv")
    status, out, _ = cli("evaluate", "--manifest", str(tmp_path / "syn" / "manifest.txt"), "--method", "identity", "--out", table)
    assert status == 0
    assert out.splitlines()[0] == "sample_id\tpsnr\tssim"
    assert out.splitlines()[-1].startswith("#mean\t")
    assert open(table, encoding="utf-8").read() == out


@pytest.mark.slow
def test_training_pipeline_commands(cli, tmp_path):
    _synth(cli, str(tmp_path / "syn"))
    synthetic = str(tmp_path / "syn" / "manifest.txt")

    status, out, _ = cli("train", "--manifest", synthetic, "--run-dir", str(tmp_path / "pre"))
    assert status == 0
    pretrained = out.strip()
    assert pretrained.endswith("pretrain_final.pt")

    status, out, _ = cli("adapt", "--manifest", synthetic, "--ckpt", pretrained, "--run-dir", str(tmp_path / "adapt"))
    assert status == 0
    adapted = out.strip()

    status, out, _ = cli("pseudo-gt", "--manifest", synthetic, "--ckpt", adapted, "--out", str(tmp_path / "pseudo"))
    assert status == 0 and "wrote 3 pseudo pairs" in out

    status, out, _ = cli(
        "finetune", "--manifest", str(tmp_path / "pseudo" / "manifest.txt"), "--ckpt", adapted,
        "--synthetic", synthetic, "--mix", "0.5", "--run-dir", str(tmp_path / "tune"),
    )
    assert status == 0 and out.strip().endswith("finetune_final.pt")

    status, out, _ = cli("evaluate", "--manifest", synthetic, "--method", "model", "--ckpt", out.strip(), "--split", "all")
    assert status == 0 and len(out.splitlines()) == 7

    status, out, _ = cli("cycle", "--manifest", synthetic, "--ckpt", pretrained, "--cycles", "1", "--run-dir", str(tmp_path / "cycle"))
    assert status == 0
    assert out.strip() == os.path.join(str(tmp_path / "cycle"), "cycle_0", "finetune", "checkpoints", "finetune_final.pt")


@pytest.mark.slow
def test_ablate_command(cli, tmp_path):
    _synth(cli, str(tmp_path / "syn"))
    table = str(tmp_path / "ablation.tsv")
    status, out, _ = cli(
        "ablate", "--axis", "no_priors", "--manifest", str(tmp_path / "syn" / "manifest.txt"),
        "--run-dir", str(tmp_path / "ablation"), "--out", table,
    )
    assert status == 0
    assert out.splitlines()[0].split("\t")[:2] == ["variant", "stages"]
    assert out.splitlines()[1].startswith("no_priors\tpretrain\t")
    assert os.path.isfile(table)


def test_runtime_errors_exit_with_status_one(cli, tmp_path):
    status, _, err = cli("evaluate", "--manifest", str(tmp_path / "missing.txt"), "--method", "identity")
    assert status == 1
    assert err.startswith("error: ")

    status, _, err = cli("--set", "model.colour=red", "evaluate", "--manifest", "x", "--method", "identity")
    assert status == 1

    status, _, err = cli("evaluate", "--manifest", "x", "--method", "model")
    assert status == 1


def test_dehaze_failure_is_reported(cli, tmp_path, mocker):
    source = str(tmp_path / "in.png")
    save_image(np.full((8, 8, 3), 0.5), source)
    dehazer = mocker.patch(
        "src.analysis.evaluator.dehaze_bccr", side_effect=NumericGuardError("atmospheric light has a zero component")
    )

    status, _, err = cli("dehaze", "--method", "bccr", source, str(tmp_path / "out.png"))

    assert status == 1
    assert err == "error: atmospheric light has a zero component\n"
    assert dehazer.call_count == 1
    assert not os.path.exists(tmp_path / "out.png")


def test_torch_runtime_errors_are_reported(cli, tmp_path, mocker):
    source = str(tmp_path / "in.png")
    save_image(np.full((8, 8, 3), 0.5), source)
    mocker.patch("src.analysis.evaluator.dehaze_bccr", side_effect=RuntimeError("size mismatch for ending.weight"))

    status, _, err = cli("dehaze", "--method", "bccr", source, str(tmp_path / "out.png"))

    assert status == 1
    assert err == "error: size mismatch for ending.weight\n"
    reports = [f for f in os.listdir(tmp_path / "logs") if f.startswith("error_")]
    assert len(reports) == 1


def test_usage_errors_exit_with_status_two(cli):
    with pytest.raises(SystemExit) as excinfo:
        cli("dehaze", "--method", "sharpen", "a.png", "b.png")
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        cli("--no-such-flag", "synth")
    assert excinfo.value.code == 2
