"""
Ablation harness.

Each variant is a set of settings overrides plus the training stages it runs.
Variants of one axis are trained identically from the same seed and scored on
the paired validation split of the synthetic manifest.
"""
import logging
import os
from functools import partial
from typing import Dict, List, Optional, Tuple

import pandas as pd

from ..analysis.evaluator import evaluate
from ..config import Settings, apply_overrides, bccr_params, model_config, train_config
from ..data.manifest import MANIFEST_NAME, DatasetManifest
from ..models.network import build_model, count_parameters
from ..utils.exceptions import ParameterError
from .pseudo_labels import coarse_dehaze, generate_pseudo_gt
from .trainer import TrainResult, finetune, pretrain, unsupervised_adapt

logger = logging.getLogger(__name__)

AXES: Dict[str, Tuple[str, ...]] = {
    "priors": ("no_priors", "q_dcp_only", "q_bcp_only", "full"),
    "blocks": ("resblock", "vitblock", "no_latent", "nafblock"),
    "unsupervised_losses": ("no_spa", "no_exp", "no_col", "no_dcp", "no_bcp", "all_losses"),
    "stages": ("setting_i", "setting_ii", "setting_iii"),
}

OVERRIDES: Dict[str, Tuple[str, ...]] = {
    "no_priors": ("model.prior_mode=none",),
    "q_dcp_only": ("model.prior_mode=dcp",),
    "q_bcp_only": ("model.prior_mode=bcp",),
    "full": (),
    "resblock": ("model.block_type=res",),
    "vitblock": ("model.block_type=vit",),
    "no_latent": ("model.bottleneck_blocks=0",),
    "nafblock": (),
    "no_spa": ("unsupervised_loss.lambda_spa=0",),
    "no_exp": ("unsupervised_loss.lambda_exp=0",),
    "no_col": ("unsupervised_loss.lambda_col=0",),
    "no_dcp": ("unsupervised_loss.lambda_dcp=0",),
    "no_bcp": ("unsupervised_loss.lambda_bcp=0",),
    "all_losses": (),
    "setting_i": (),
    "setting_ii": (),
    "setting_iii": (),
}

_SUPERVISED = ("pretrain",)
_ADAPTED = ("pretrain", "unsupervised")
_FULL = ("pretrain", "unsupervised", "finetune")


def variant_stages(variant: str) -> Tuple[str, ...]:
    if variant in AXES["unsupervised_losses"] or variant == "setting_ii":
        return _ADAPTED
    if variant == "setting_iii":
        return _FULL
    return _SUPERVISED


def resolve_variants(axis: str) -> List[str]:
    """Variants of an axis group, or a single variant name."""
    if axis in AXES:
        return list(AXES[axis])
    if axis in OVERRIDES:
        return [axis]
    known = sorted(set(AXES) | set(OVERRIDES))
    raise ParameterError(f"unknown ablation axis {axis!r}; expected one of {', '.join(known)}")


def run_variant(
    variant: str,
    settings: Settings,
    synthetic: DatasetManifest,
    run_dir: str,
    real: Optional[DatasetManifest] = None,
    eval_split: str = "val",
) -> Dict[str, object]:
    """Train one variant through its stages and return its metric row."""
    if variant not in OVERRIDES:
        raise ParameterError(f"unknown ablation variant {variant!r}")
    settings = apply_overrides(settings, OVERRIDES[variant])
    real = real or synthetic
    out = os.path.join(run_dir, variant)
    stages = variant_stages(variant)

    model = build_model(model_config(settings), seed=settings["general"]["seed"])
    result: TrainResult = pretrain(model, synthetic, train_config(settings, "pretrain"), os.path.join(out, "pretrain"))
    if "unsupervised" in stages:
        result = unsupervised_adapt(
            result.model, real, train_config(settings, "unsupervised"), os.path.join(out, "unsupervised")
        )
    if "finetune" in stages:
        pseudo_root = os.path.join(out, "pseudo")
        generate_pseudo_gt(result.model, real, bccr_params(settings), pseudo_root, checkpoint_path=result.checkpoint_path)
        pseudo = DatasetManifest.load(os.path.join(pseudo_root, MANIFEST_NAME))
        result = finetune(
            result.model, pseudo, train_config(settings, "finetune"), os.path.join(out, "finetune"), synthetic
        )

    report = evaluate(synthetic, partial(coarse_dehaze, result.model), split=eval_split, name=variant)
    logger.info(f"Ablation variant {variant}: PSNR {report.mean_psnr:.4f} SSIM {report.mean_ssim:.4f}")
    return {
        "variant": variant,
        "stages": "+".join(stages),
        "psnr": report.mean_psnr,
        "ssim": report.mean_ssim,
        "parameters": count_parameters(result.model),
        "parameter_hash": result.parameter_hash,
    }


def run_ablation(
    axis: str,
    settings: Settings,
    synthetic: DatasetManifest,
    run_dir: str,
    real: Optional[DatasetManifest] = None,
    eval_split: str = "val",
    table_path: Optional[str] = None,
) -> pd.DataFrame:
    """
    Train and score every variant of `axis`.

    Args:
        axis: An axis group (priors, blocks, unsupervised_losses, stages) or one variant name
        settings: Base settings; variants apply their overrides on top
        synthetic: Paired synthetic manifest used for supervised stages and scoring
        run_dir: Each variant writes to run_dir/<variant>
        real: Unlabeled manifest for unsupervised stages; defaults to `synthetic`
        eval_split: Split of `synthetic` the variants are scored on
        table_path: Optional tab-separated output file

    Returns:
        pd.DataFrame: One row per variant with mean PSNR and SSIM

    Raises:
        ParameterError: Unknown axis
    """
    variants = resolve_variants(axis)
    rows = [run_variant(v, settings, synthetic, run_dir, real, eval_split) for v in variants]
    table = pd.DataFrame(rows, columns=["variant", "stages", "psnr", "ssim", "parameters", "parameter_hash"])
    if table_path:
        os.makedirs(os.path.dirname(os.path.abspath(table_path)), exist_ok=True)
        table.to_csv(table_path, sep="\t", index=False, float_format="%.6f")
    return table
