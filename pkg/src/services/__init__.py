"""
Service layer for nighthaze.

This package contains service classes that coordinate persistent artifacts
between the training pipeline and the file system.
"""

from .checkpoint_service import CheckpointInfo, CheckpointManager

__all__ = ['CheckpointInfo', 'CheckpointManager']
