"""
nighthaze - nighttime image dehazing with prior queries

This package provides the physics priors, a procedural nighttime-haze dataset
generator, classical BCCR/DCP dehazers, the prior-query transformer with its
supervised and unsupervised losses, the semi-supervised training pipeline and
PSNR/SSIM evaluation.
"""

from .version import __version__

__all__ = ['__version__']
