"""
Evaluation and reporting.

This module runs a dehazing method over the paired test split of a manifest,
collects per-sample PSNR/SSIM into an EvaluationReport and renders training
logs as loss-curve plots.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional, Union

import pandas as pd
from tqdm import tqdm

from ..data.image_io import ImageRGB, load_image
from ..data.manifest import DatasetManifest
from ..dehaze.classical import BccrParams, dehaze_bccr, dehaze_dcp
from ..utils.error_logger import ErrorLogger
from ..utils.exceptions import DataError, ParameterError
from .metrics import MetricRow, psnr, ssim

logger = logging.getLogger(__name__)

Method = Callable[[ImageRGB], ImageRGB]
METHODS = ("identity", "dcp", "bccr", "model")
COLUMNS = ["sample_id", "psnr", "ssim"]


def resolve_method(
    name: str,
    checkpoint: Optional[str] = None,
    bccr: Optional[BccrParams] = None,
    dcp_patch: int = 15,
) -> Method:
    """
    Map a method name to an image -> image function.

    Args:
        name: One of identity, dcp, bccr, model
        checkpoint: Checkpoint file, required for `model`
        bccr: Parameters for `bccr`
        dcp_patch: Prior window for `dcp`

    Raises:
        ParameterError: Unknown name, or `model` without a checkpoint
    """
    if name == "identity":
        return lambda img: img
    if name == "dcp":
        return partial(dehaze_dcp, patch=dcp_patch)
    if name == "bccr":
        return partial(dehaze_bccr, p=bccr or BccrParams())
    if name == "model":
        if not checkpoint:
            raise ParameterError("method 'model' needs a checkpoint")
        from ..services.checkpoint_service import CheckpointManager
        from ..training.pseudo_labels import coarse_dehaze

        model = CheckpointManager.load(checkpoint).model
        return partial(coarse_dehaze, model)
    raise ParameterError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")


@dataclass
class EvaluationReport:
    """Per-sample metrics ordered by sample id, plus their means."""
    rows: List[MetricRow] = field(default_factory=list)
    method: str = ""

    @property
    def mean_psnr(self) -> float:
        return math.fsum(r.psnr for r in self.rows) / len(self.rows) if self.rows else math.nan

    @property
    def mean_ssim(self) -> float:
        return math.fsum(r.ssim for r in self.rows) / len(self.rows) if self.rows else math.nan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.rows], columns=COLUMNS)

    def to_table(self) -> str:
        """`sample_id<TAB>psnr<TAB>ssim` lines under a header, then the `#mean` summary line."""
        body = self.to_frame().to_csv(sep="\t", index=False, float_format="%.6f", lineterminator="\n")
        return body + f"#mean\t{_fmt(self.mean_psnr)}\t{_fmt(self.mean_ssim)}\n"

    def write(self, path: str) -> str:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_table())
        return path

    @classmethod
    def read(cls, path: str) -> "EvaluationReport":
        """Parse a table written by `write`; the summary line is recomputed, not read."""
        frame = pd.read_csv(path, sep="\t", comment="#", dtype={"sample_id": str})
        rows = [MetricRow(str(r.sample_id), float(r.psnr), float(r.ssim)) for r in frame.itertuples(index=False)]
        return cls(rows)


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.6f}"


def evaluate(
    manifest: DatasetManifest,
    method: Union[str, Method],
    split: Optional[str] = "test",
    checkpoint: Optional[str] = None,
    show_progress: bool = False,
    name: Optional[str] = None,
) -> EvaluationReport:
    """
    Run `method` on every hazy image of a paired split and score it against the clean image.

    Raises:
        DataError: The manifest is unpaired, the split is empty, or a file is missing
    """
    if name is None:
        name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
    fn = resolve_method(method, checkpoint) if isinstance(method, str) else method
    if not manifest.paired:
        raise DataError("evaluation needs a paired manifest")
    records = manifest.samples if split is None else manifest.split(split)
    if not records:
        raise DataError(f"split {split!r} is empty")

    rows: List[MetricRow] = []
    try:
        for record in tqdm(records, desc=f"evaluate {name}", disable=not show_progress, leave=False):
            hazy_path, clean_path = manifest.resolve(record.hazy_path), manifest.resolve(record.clean_path)
            for path in (hazy_path, clean_path):
                if not os.path.isfile(path):
                    raise DataError(f"missing image {path}")
            pred = fn(load_image(hazy_path))
            clean = load_image(clean_path)
            rows.append(MetricRow(record.sample_id, psnr(pred, clean), ssim(pred, clean)))
    except Exception as e:
        ErrorLogger.log_error(e, {'action': 'evaluate', 'method': name, 'done': len(rows)})
        raise

    rows.sort(key=lambda r: r.sample_id)
    report = EvaluationReport(rows, name)
    logger.info(f"Evaluated {name} on {len(rows)} samples: PSNR {_fmt(report.mean_psnr)} SSIM {_fmt(report.mean_ssim)}")
    return report


def read_training_log(log_path: str) -> pd.DataFrame:
    """Parse `step<TAB>lr<TAB>name=value...` lines into a frame indexed by step."""
    records = []
    with open(log_path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            row = {"step": int(fields[0]), "lr": float(fields[1])}
            for item in fields[2:]:
                key, _, value = item.partition("=")
                row[key] = float(value)
            records.append(row)
    frame = pd.DataFrame.from_records(records)
    return frame.set_index("step") if not frame.empty else frame


def plot_training_curve(log_path: str, png_path: str) -> str:
    """Plot every loss term and the learning rate of a training log into a PNG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frame = read_training_log(log_path)
    fig, (ax_loss, ax_lr) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    try:
        if frame.empty:
            ax_loss.text(0.5, 0.5, "No training steps logged", ha="center", va="center", transform=ax_loss.transAxes)
        else:
            for column in frame.columns.drop("lr"):
                ax_loss.plot(frame.index, frame[column], label=column, linewidth=2.0 if column == "total" else 1.0)
            ax_loss.legend(loc="upper right")
            ax_lr.plot(frame.index, frame["lr"], color="tab:gray")
        ax_loss.set_title(os.path.basename(os.path.dirname(os.path.abspath(log_path))) or "training")
        ax_loss.set_ylabel("loss")
        ax_loss.grid(True)
        ax_lr.set_xlabel("step")
        ax_lr.set_ylabel("lr")
        ax_lr.grid(True)
        fig.tight_layout()
        fig.savefig(png_path, dpi=100)
    finally:
        plt.close(fig)
    return png_path
