"""
Training stages of the semi-supervised pipeline.

pretrain            supervised on synthetic pairs
unsupervised_adapt  prior and Zero-reference losses on unlabeled real images
finetune            supervised on pseudo pairs, optionally mixed with synthetic pairs

Every stage runs Adam under a triangular cyclic learning rate, appends one line
per step to `train.log` in its run directory, keeps periodic checkpoints and
finishes with a final checkpoint and a loss-curve plot.
"""
import logging
import os
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import torch
from torch.optim.lr_scheduler import CyclicLR
from tqdm import tqdm

from ..data.datasets import TrainingStream, make_loader, records_for
from ..data.manifest import MANIFEST_NAME, DatasetManifest
from ..models.network import PriorQueryTransformer, count_parameters, parameter_hash
from ..services.checkpoint_service import CheckpointManager
from ..utils.error_logger import ErrorLogger
from ..utils.exceptions import DataError, NumericGuardError, ParameterError
from ..version import __version__
from .losses import (
    FeatureExtractor,
    LossReport,
    SupervisedLossConfig,
    UnsupervisedLossConfig,
    supervised_total,
    unsupervised_total,
)

logger = logging.getLogger(__name__)

LOG_NAME = "train.log"
CURVE_NAME = "train_curve.png"


class Stage(str, Enum):
    PRETRAIN = "pretrain"
    UNSUPERVISED = "unsupervised"
    FINETUNE = "finetune"

    @property
    def supervised(self) -> bool:
        return self != Stage.UNSUPERVISED


@dataclass
class TrainConfig:
    """Optimizer, schedule, data and loss settings of one training stage."""
    stage: Stage = Stage.PRETRAIN
    lr: float = 2e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    batch: int = 4
    steps: int = 2000
    crop: int = 64
    cyclic_max_ratio: float = 1.2
    cycle_step: int = 1000
    seed: int = 0
    checkpoint_every: int = 500
    max_checkpoints: int = 3
    log_every: int = 50
    augment: bool = True
    synthetic_mix: float = 0.0
    num_workers: int = 0
    supervised_loss: SupervisedLossConfig = field(default_factory=SupervisedLossConfig)
    unsupervised_loss: UnsupervisedLossConfig = field(default_factory=UnsupervisedLossConfig)
    extractor_seed: int = 0

    def __post_init__(self):
        self.stage = Stage(self.stage)
        self.betas = (float(self.betas[0]), float(self.betas[1]))
        if isinstance(self.supervised_loss, dict):
            self.supervised_loss = SupervisedLossConfig.from_dict(self.supervised_loss)
        if isinstance(self.unsupervised_loss, dict):
            self.unsupervised_loss = UnsupervisedLossConfig.from_dict(self.unsupervised_loss)
        if self.lr <= 0:
            raise ParameterError(f"lr must be > 0, got {self.lr}")
        if self.batch < 1:
            raise ParameterError(f"batch must be >= 1, got {self.batch}")
        if self.steps < 0 or self.crop < 0:
            raise ParameterError("steps and crop must be >= 0")
        if self.cyclic_max_ratio < 1:
            raise ParameterError(f"cyclic_max_ratio must be >= 1, got {self.cyclic_max_ratio}")
        if self.cycle_step < 1:
            raise ParameterError(f"cycle_step must be >= 1, got {self.cycle_step}")
        if not 0.0 <= self.synthetic_mix <= 1.0:
            raise ParameterError(f"synthetic_mix must lie in [0, 1], got {self.synthetic_mix}")
        if self.checkpoint_every < 0 or self.log_every < 1:
            raise ParameterError("checkpoint_every must be >= 0 and log_every >= 1")

    @property
    def max_lr(self) -> float:
        return self.lr * self.cyclic_max_ratio

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stage': self.stage.value,
            'lr': self.lr,
            'betas': list(self.betas),
            'batch': self.batch,
            'steps': self.steps,
            'crop': self.crop,
            'cyclic_max_ratio': self.cyclic_max_ratio,
            'cycle_step': self.cycle_step,
            'seed': self.seed,
            'checkpoint_every': self.checkpoint_every,
            'max_checkpoints': self.max_checkpoints,
            'log_every': self.log_every,
            'augment': self.augment,
            'synthetic_mix': self.synthetic_mix,
            'num_workers': self.num_workers,
            'supervised_loss': self.supervised_loss.to_dict(),
            'unsupervised_loss': self.unsupervised_loss.to_dict(),
            'extractor_seed': self.extractor_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrainConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainResult:
    """Outcome of one training stage."""
    model: PriorQueryTransformer
    stage: Stage
    steps: int
    checkpoint_path: str
    log_path: str
    curve_path: Optional[str]
    parameter_hash: str
    history: List[Dict[str, float]] = field(default_factory=list)


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch and ask torch for deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def make_scheduler(optimizer: torch.optim.Optimizer, cfg: TrainConfig) -> CyclicLR:
    """Triangular schedule between lr and cyclic_max_ratio * lr, half period cycle_step."""
    return CyclicLR(
        optimizer,
        base_lr=cfg.lr,
        max_lr=cfg.max_lr,
        step_size_up=cfg.cycle_step,
        mode="triangular",
        cycle_momentum=False,
    )


class Trainer:
    """
    Runs one stage: owns the optimizer, the schedule, the training log and the checkpoints.

    Args:
        model: Network to train in place
        cfg: Stage configuration
        run_dir: Directory for train.log, train_curve.png and checkpoints/
        show_progress: Display a tqdm progress bar
    """

    def __init__(self, model: PriorQueryTransformer, cfg: TrainConfig, run_dir: str, show_progress: bool = False):
        self.logger = logging.getLogger(__name__)
        self.model = model
        self.cfg = cfg
        self.run_dir = run_dir
        self.show_progress = show_progress
        os.makedirs(run_dir, exist_ok=True)
        self.log_path = os.path.join(run_dir, LOG_NAME)
        self.curve_path = os.path.join(run_dir, CURVE_NAME)
        self.checkpoints = CheckpointManager(os.path.join(run_dir, "checkpoints"), cfg.max_checkpoints)

        seed_everything(cfg.seed)
        self.optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)
        self.scheduler = make_scheduler(self.optimizer, cfg)
        self.extractor: Optional[FeatureExtractor] = None
        if cfg.stage.supervised:
            self.extractor = FeatureExtractor(seed=cfg.extractor_seed)

    def compute_loss(self, batch: Dict[str, torch.Tensor]) -> LossReport:
        hazy = batch["hazy"]
        pred = self.model(hazy)
        if self.cfg.stage.supervised:
            if "clean" not in batch:
                raise DataError(f"stage {self.cfg.stage.value} needs paired samples")
            return supervised_total(pred, batch["clean"], self.cfg.supervised_loss, self.extractor)
        return unsupervised_total(hazy, pred, self.cfg.unsupervised_loss)

    def _write_header(self, log) -> None:
        log.write(
            f"# stage={self.cfg.stage.value}\tversion={__version__}\t"
            f"parameters={count_parameters(self.model)}\tseed={self.cfg.seed}\n"
        )
        log.write("# step\tlr\tterms\n")

    def run(self, loader: Optional[torch.utils.data.DataLoader]) -> TrainResult:
        """Train for cfg.steps batches of `loader` and save the final checkpoint."""
        cfg = self.cfg
        history: List[Dict[str, float]] = []
        step = 0
        self.model.train()
        self.logger.info(f"Starting {cfg.stage.value}: {cfg.steps} steps, batch {cfg.batch}, lr {cfg.lr:g}")

        with open(self.log_path, "a", encoding="utf-8") as log:
            self._write_header(log)
            if cfg.steps > 0 and loader is not None:
                with tqdm(total=cfg.steps, desc=cfg.stage.value, disable=not self.show_progress, leave=False) as bar:
                    for batch in loader:
                        if step >= cfg.steps:
                            break
                        lr = self.optimizer.param_groups[0]["lr"]
                        report = self.compute_loss(batch)
                        if not torch.isfinite(report.total):
                            raise NumericGuardError(f"non-finite loss at step {step + 1}: {report.to_dict()}")

                        self.optimizer.zero_grad(set_to_none=True)
                        report.total.backward()
                        self.optimizer.step()
                        self.scheduler.step()
                        step += 1

                        values = report.to_dict()
                        history.append(values)
                        log.write(f"{step}\t{lr:.6e}\t{report.format_fields()}\n")
                        bar.update(1)
                        bar.set_postfix(total=f"{values['total']:.4f}")
                        if step % cfg.log_every == 0:
                            log.flush()
                            self.logger.info(f"{cfg.stage.value} step {step}/{cfg.steps} lr={lr:.3e} {report.format_fields()}")
                        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < cfg.steps:
                            self.checkpoints.save(self.model, step, cfg.stage.value)

        self.model.eval()
        checkpoint = self.checkpoints.save(
            self.model, step, cfg.stage.value, final=True, extra={'train_config': cfg.to_dict()}
        )
        curve = self._plot()
        digest = parameter_hash(self.model)
        self.logger.info(f"Finished {cfg.stage.value} after {step} steps; checkpoint {checkpoint}")
        return TrainResult(self.model, cfg.stage, step, checkpoint, self.log_path, curve, digest, history)

    def _plot(self) -> Optional[str]:
        from ..analysis.evaluator import plot_training_curve

        try:
            return plot_training_curve(self.log_path, self.curve_path)
        except Exception as e:
            self.logger.warning(f"Could not plot training curve: {e}")
            return None


def _check_stage(cfg: TrainConfig, expected: Stage) -> None:
    if cfg.stage != expected:
        raise ParameterError(f"expected a {expected.value} configuration, got {cfg.stage.value}")


def _run_stage(action: str, run: Callable[[], TrainResult], context: Dict[str, Any]) -> TrainResult:
    try:
        return run()
    except Exception as e:
        ErrorLogger.log_error(e, dict(context, action=action))
        raise


def _stream(samples, cfg: TrainConfig, mix=None, mix_ratio: float = 0.0) -> TrainingStream:
    return TrainingStream(
        samples,
        length=cfg.steps * cfg.batch,
        crop=cfg.crop,
        seed=cfg.seed,
        use_augment=cfg.augment,
        mix_samples=mix,
        mix_ratio=mix_ratio,
    )


def pretrain(
    model: PriorQueryTransformer,
    manifest: DatasetManifest,
    cfg: TrainConfig,
    run_dir: str,
    show_progress: bool = False,
) -> TrainResult:
    """Supervised training on the train split of a paired synthetic manifest."""
    _check_stage(cfg, Stage.PRETRAIN)

    def run() -> TrainResult:
        samples = records_for(manifest, "train", paired=True)
        if not samples:
            raise DataError("manifest has no training samples")
        loader = make_loader(_stream(samples, cfg), cfg.batch, cfg.num_workers) if cfg.steps else None
        return Trainer(model, cfg, run_dir, show_progress).run(loader)

    return _run_stage('pretrain', run, {'run_dir': run_dir, 'steps': cfg.steps})


def unsupervised_adapt(
    model: PriorQueryTransformer,
    manifest: DatasetManifest,
    cfg: TrainConfig,
    run_dir: str,
    show_progress: bool = False,
) -> TrainResult:
    """Unsupervised training on the train split of an unlabeled real-image manifest."""
    _check_stage(cfg, Stage.UNSUPERVISED)

    def run() -> TrainResult:
        samples = records_for(manifest, "train", paired=False)
        if not samples:
            raise DataError("manifest has no training samples")
        loader = make_loader(_stream(samples, cfg), cfg.batch, cfg.num_workers) if cfg.steps else None
        return Trainer(model, cfg, run_dir, show_progress).run(loader)

    return _run_stage('unsupervised_adapt', run, {'run_dir': run_dir, 'steps': cfg.steps})


def finetune(
    model: PriorQueryTransformer,
    pseudo_manifest: DatasetManifest,
    cfg: TrainConfig,
    run_dir: str,
    synthetic: Optional[DatasetManifest] = None,
    show_progress: bool = False,
) -> TrainResult:
    """
    Supervised training on pseudo pairs.

    Every pseudo pair is used regardless of its split. With cfg.synthetic_mix > 0
    each item is drawn from the train split of `synthetic` with that probability.
    """
    _check_stage(cfg, Stage.FINETUNE)

    def run() -> TrainResult:
        samples = records_for(pseudo_manifest, None, paired=True)
        if not samples:
            raise DataError("no pseudo pairs to fine-tune on")
        mix = None
        if cfg.synthetic_mix > 0:
            if synthetic is None:
                raise DataError("synthetic_mix > 0 needs a synthetic manifest")
            mix = records_for(synthetic, "train", paired=True)
        loader = None
        if cfg.steps:
            loader = make_loader(_stream(samples, cfg, mix, cfg.synthetic_mix), cfg.batch, cfg.num_workers)
        return Trainer(model, cfg, run_dir, show_progress).run(loader)

    return _run_stage('finetune', run, {'run_dir': run_dir, 'steps': cfg.steps, 'synthetic_mix': cfg.synthetic_mix})


@dataclass
class CycleResult:
    """Artifacts of one adapt -> pseudo-GT -> finetune round."""
    adapt: TrainResult
    pseudo_manifest_path: str
    finetune: TrainResult


def semi_supervised_cycle(
    model: PriorQueryTransformer,
    real_manifest: DatasetManifest,
    adapt_cfg: TrainConfig,
    finetune_cfg: TrainConfig,
    bccr,
    run_dir: str,
    cycles: int = 1,
    synthetic: Optional[DatasetManifest] = None,
    show_progress: bool = False,
) -> List[CycleResult]:
    """
    Repeat unsupervised adaptation, pseudo-GT generation and fine-tuning `cycles` times.

    Round i writes to run_dir/cycle_<i>/{unsupervised,pseudo,finetune}. Pseudo
    labels are made from the train split of `real_manifest`.
    """
    from .pseudo_labels import generate_pseudo_gt

    if cycles < 1:
        raise ParameterError(f"cycles must be >= 1, got {cycles}")
    results: List[CycleResult] = []
    for i in range(cycles):
        cycle_dir = os.path.join(run_dir, f"cycle_{i}")
        adapted = unsupervised_adapt(model, real_manifest, adapt_cfg, os.path.join(cycle_dir, "unsupervised"), show_progress)
        pseudo_root = os.path.join(cycle_dir, "pseudo")
        generate_pseudo_gt(
            adapted.model,
            real_manifest,
            bccr,
            pseudo_root,
            checkpoint_path=adapted.checkpoint_path,
            split="train",
            show_progress=show_progress,
        )
        manifest_path = os.path.join(pseudo_root, MANIFEST_NAME)
        pseudo_manifest = DatasetManifest.load(manifest_path)
        tuned = finetune(adapted.model, pseudo_manifest, finetune_cfg, os.path.join(cycle_dir, "finetune"), synthetic, show_progress)
        model = tuned.model
        results.append(CycleResult(adapted, manifest_path, tuned))
        logger.info(f"Semi-supervised cycle {i + 1}/{cycles} done")
    return results
