"""
Command-line interface of nighthaze.

    nighthaze [--config FILE] [--set section.key=value ...] <command> [options]

Commands: synth, train, adapt, pseudo-gt, finetune, cycle, dehaze, evaluate, ablate.
Exit status is 0 on success, 1 on a runtime failure (one `error:` line on
stderr) and 2 on a usage error.
"""
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from .config import (
    Settings,
    apply_overrides,
    bccr_params,
    degradation_ranges,
    load_settings,
    model_config,
    scene_ranges,
    train_config,
)
from .data.image_io import load_image, save_image
from .data.manifest import MANIFEST_NAME, DatasetManifest
from .utils.error_logger import ErrorLogger
from .utils.exceptions import NightHazeError
from .version import __version__

logger = logging.getLogger(__name__)

PROG = "nighthaze"


def _overrides(args: argparse.Namespace, mapping: Dict[str, str]) -> List[str]:
    """`section.key=value` strings for the flags of `mapping` that were given."""
    result = []
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            result.append(f"{dotted}={value}")
    return result


def _run_dir(args: argparse.Namespace, settings: Settings, stage: str) -> str:
    return args.run_dir or os.path.join(settings["general"]["run_dir"], stage)


def _load_model(path: str):
    from .services.checkpoint_service import CheckpointManager

    info = CheckpointManager.load(path)
    logger.info(f"Loaded checkpoint {path} (stage {info.stage}, step {info.step})")
    return info.model


def _split(value: str) -> Optional[str]:
    return None if value == "all" else value


def cmd_synth(args: argparse.Namespace, settings: Settings) -> int:
    from .synthesis.haze_synth import generate_dataset

    settings = apply_overrides(settings, _overrides(args, {
        "count": "synth.count",
        "crop": "synth.crop",
        "crops_per_image": "synth.crops_per_image",
        "seed": "general.seed",
    }))
    synth = settings["synth"]
    manifest = generate_dataset(
        synth["count"],
        args.out,
        scene_ranges(settings),
        degradation_ranges(settings),
        crop=synth["crop"],
        crops_per_image=synth["crops_per_image"],
        seed=settings["general"]["seed"],
        fractions=synth["fractions"],
        show_progress=args.progress,
    )
    print(f"wrote {len(manifest)} pairs and {os.path.join(args.out, MANIFEST_NAME)}")
    return 0


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    from .models.network import build_model
    from .training.trainer import pretrain

    settings = apply_overrides(settings, _overrides(args, {"steps": "pretrain.steps"}))
    model = _load_model(args.init) if args.init else build_model(model_config(settings), seed=settings["general"]["seed"])
    result = pretrain(
        model, DatasetManifest.load(args.manifest), train_config(settings, "pretrain"),
        _run_dir(args, settings, "pretrain"), show_progress=args.progress,
    )
    print(result.checkpoint_path)
    return 0


def cmd_adapt(args: argparse.Namespace, settings: Settings) -> int:
    from .training.trainer import unsupervised_adapt

    settings = apply_overrides(settings, _overrides(args, {"steps": "unsupervised.steps"}))
    result = unsupervised_adapt(
        _load_model(args.ckpt), DatasetManifest.load(args.manifest), train_config(settings, "unsupervised"),
        _run_dir(args, settings, "unsupervised"), show_progress=args.progress,
    )
    print(result.checkpoint_path)
    return 0


def cmd_pseudo_gt(args: argparse.Namespace, settings: Settings) -> int:
    from .training.pseudo_labels import generate_pseudo_gt

    pairs = generate_pseudo_gt(
        _load_model(args.ckpt), DatasetManifest.load(args.manifest), bccr_params(settings), args.out,
        checkpoint_path=os.path.abspath(args.ckpt), split=_split(args.split), show_progress=args.progress,
    )
    print(f"wrote {len(pairs)} pseudo pairs and {os.path.join(args.out, MANIFEST_NAME)}")
    return 0


def cmd_finetune(args: argparse.Namespace, settings: Settings) -> int:
    from .training.trainer import finetune

    settings = apply_overrides(settings, _overrides(args, {"steps": "finetune.steps", "mix": "finetune.synthetic_mix"}))
    synthetic = DatasetManifest.load(args.synthetic) if args.synthetic else None
    result = finetune(
        _load_model(args.ckpt), DatasetManifest.load(args.manifest), train_config(settings, "finetune"),
        _run_dir(args, settings, "finetune"), synthetic=synthetic, show_progress=args.progress,
    )
    print(result.checkpoint_path)
    return 0


def cmd_cycle(args: argparse.Namespace, settings: Settings) -> int:
    from .training.trainer import semi_supervised_cycle

    settings = apply_overrides(settings, _overrides(args, {"cycles": "finetune.cycles"}))
    synthetic = DatasetManifest.load(args.synthetic) if args.synthetic else None
    results = semi_supervised_cycle(
        _load_model(args.ckpt),
        DatasetManifest.load(args.manifest),
        train_config(settings, "unsupervised"),
        train_config(settings, "finetune"),
        bccr_params(settings),
        _run_dir(args, settings, "cycle"),
        cycles=settings["finetune"]["cycles"],
        synthetic=synthetic,
        show_progress=args.progress,
    )
    print(results[-1].finetune.checkpoint_path)
    return 0


def cmd_dehaze(args: argparse.Namespace, settings: Settings) -> int:
    from .analysis.evaluator import resolve_method

    method = resolve_method(args.method, args.ckpt, bccr_params(settings), dcp_patch=args.patch)
    save_image(method(load_image(args.input)), args.output)
    print(args.output)
    return 0


def cmd_evaluate(args: argparse.Namespace, settings: Settings) -> int:
    from .analysis.evaluator import evaluate, resolve_method

    method = resolve_method(args.method, args.ckpt, bccr_params(settings))
    report = evaluate(
        DatasetManifest.load(args.manifest), method, split=_split(args.split),
        show_progress=args.progress, name=args.method,
    )
    if args.out:
        report.write(args.out)
    print(report.to_table(), end="")
    return 0


def cmd_ablate(args: argparse.Namespace, settings: Settings) -> int:
    from .training.ablation import run_ablation

    settings = apply_overrides(settings, _overrides(args, {
        "steps": "pretrain.steps",
        "adapt_steps": "unsupervised.steps",
        "finetune_steps": "finetune.steps",
    }))
    real = DatasetManifest.load(args.real) if args.real else None
    table = run_ablation(
        args.axis, settings, DatasetManifest.load(args.manifest), _run_dir(args, settings, "ablation"),
        real=real, eval_split=args.split, table_path=args.out,
    )
    print(table.to_csv(sep="\t", index=False, float_format="%.6f"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Nighttime image dehazing with prior queries.")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    parser.add_argument("--config", help="settings file (default: config/settings.ini)")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one setting; may be repeated")
    parser.add_argument("--log-level", help="console log level (default from settings)")
    parser.add_argument("--log-dir", help="directory for nighthaze.log and error reports")
    parser.add_argument("--progress", action="store_true", help="show progress bars")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic paired nighttime-haze dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, help="number of rendered source scenes")
    p.add_argument("--crop", type=int, help="crop size; 0 keeps whole images")
    p.add_argument("--crops-per-image", dest="crops_per_image", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="supervised pre-training on a paired manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--steps", type=int)
    p.add_argument("--init", help="start from this checkpoint instead of a fresh model")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("adapt", help="unsupervised adaptation on unlabeled real images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True, help="pre-trained checkpoint")
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--steps", type=int)
    p.set_defaults(handler=cmd_adapt)

    p = sub.add_parser("pseudo-gt", help="make BCCR-refined pseudo ground truths")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True, help="adapted checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=["train", "val", "test", "all"])
    p.set_defaults(handler=cmd_pseudo_gt)

    p = sub.add_parser("finetune", help="supervised fine-tuning on pseudo pairs")
    p.add_argument("--manifest", required=True, help="pseudo-pair manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--synthetic", help="synthetic manifest to mix in")
    p.add_argument("--mix", type=float, help="probability of drawing a synthetic pair")
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--steps", type=int)
    p.set_defaults(handler=cmd_finetune)

    p = sub.add_parser("cycle", help="repeat adapt, pseudo-gt and finetune")
    p.add_argument("--manifest", required=True, help="unlabeled real-image manifest")
    p.add_argument("--ckpt", required=True, help="pre-trained checkpoint")
    p.add_argument("--synthetic", help="synthetic manifest to mix in during fine-tuning")
    p.add_argument("--cycles", type=int)
    p.add_argument("--run-dir", dest="run_dir")
    p.set_defaults(handler=cmd_cycle)

    p = sub.add_parser("dehaze", help="dehaze one image")
    p.add_argument("--method", default="bccr", choices=["bccr", "dcp", "model"])
    p.add_argument("--ckpt", help="checkpoint for --method model")
    p.add_argument("--patch", type=int, default=15, help="prior window for --method dcp")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(handler=cmd_dehaze)

    p = sub.add_parser("evaluate", help="PSNR/SSIM on a paired split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", default="model", choices=["model", "bccr", "dcp", "identity"])
    p.add_argument("--ckpt")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score ablation variants")
    p.add_argument("--axis", required=True, help="priors, blocks, unsupervised_losses, stages or a variant name")
    p.add_argument("--manifest", required=True, help="paired synthetic manifest")
    p.add_argument("--real", help="unlabeled manifest for unsupervised stages")
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--steps", type=int)
    p.add_argument("--adapt-steps", dest="adapt_steps", type=int)
    p.add_argument("--finetune-steps", dest="finetune_steps", type=int)
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(handler=cmd_ablate)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse `argv`, run the command and return its exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = apply_overrides(load_settings(args.config), args.set)
        general = settings["general"]
        ErrorLogger.setup_logging(args.log_dir or general["log_dir"], args.log_level or general["log_level"])
        return args.handler(args, settings)
    except (NightHazeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RuntimeError as e:
        ErrorLogger.log_error(e, {'action': args.command})
        print(f"error: {e}", file=sys.stderr)
        return 1
