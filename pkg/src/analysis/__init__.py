"""
Analysis package for nighthaze.

This package contains the PSNR/SSIM metrics, the evaluation harness and the
training-curve plots.
"""

from .metrics import MetricRow, psnr, ssim
from .evaluator import EvaluationReport, evaluate, plot_training_curve, read_training_log, resolve_method

__all__ = [
    'MetricRow',
    'psnr',
    'ssim',
    'EvaluationReport',
    'evaluate',
    'plot_training_curve',
    'read_training_log',
    'resolve_method',
]
