"""
Training package for nighthaze.

This package contains the loss committees, the training stages of the
semi-supervised pipeline, pseudo-label generation and the ablation harness.
"""

from .losses import (
    LossReport,
    SupervisedLossConfig,
    UnsupervisedLossConfig,
    supervised_total,
    unsupervised_total,
)
from .trainer import (
    Stage,
    TrainConfig,
    TrainResult,
    Trainer,
    finetune,
    pretrain,
    semi_supervised_cycle,
    unsupervised_adapt,
)
from .pseudo_labels import PseudoPair, Provenance, generate_pseudo_gt, load_pseudo_pairs
from .ablation import run_ablation

__all__ = [
    'LossReport',
    'SupervisedLossConfig',
    'UnsupervisedLossConfig',
    'supervised_total',
    'unsupervised_total',
    'Stage',
    'TrainConfig',
    'TrainResult',
    'Trainer',
    'finetune',
    'pretrain',
    'semi_supervised_cycle',
    'unsupervised_adapt',
    'PseudoPair',
    'Provenance',
    'generate_pseudo_gt',
    'load_pseudo_pairs',
    'run_ablation',
]
