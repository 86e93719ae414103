"""
Checkpoint service for nighthaze.

This module saves and restores model checkpoints: a single torch archive holding
the model configuration, the named parameter tensors, the training step and
stage, and the versions it was written with.
"""
import os
import re
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import torch

from ..models.network import ModelConfig, PriorQueryTransformer, parameter_hash
from ..utils.error_logger import ErrorLogger
from ..utils.exceptions import DataError
from ..version import CHECKPOINT_FORMAT, CHECKPOINT_FORMAT_VERSION, get_version, is_compatible_version

_PERIODIC = re.compile(r"^ckpt_(?P<stage>[a-z_]+)_(?P<step>\d{7})\.pt$")


@dataclass
class CheckpointInfo:
    """A restored checkpoint."""
    model: PriorQueryTransformer
    config: ModelConfig
    step: int
    stage: str
    parameter_hash: str
    path: str
    app_version: str
    extra: Dict[str, Any]


class CheckpointManager:
    """
    Writes checkpoints into one directory and applies a retention policy.

    Features:
    - Periodic checkpoints named by stage and step
    - One final checkpoint per stage that retention never removes
    - Format and major-version checks on load
    """

    def __init__(self, checkpoint_dir: str, max_checkpoints: int = 3):
        """
        Args:
            checkpoint_dir: Directory for checkpoint files
            max_checkpoints: Periodic checkpoints kept per stage
        """
        self.checkpoint_dir = checkpoint_dir
        self.max_checkpoints = max(1, int(max_checkpoints))
        self.logger = logging.getLogger(__name__)
        os.makedirs(self.checkpoint_dir, exist_ok=True)

    @staticmethod
    def final_name(stage: str) -> str:
        return f"{stage}_final.pt"

    def save(
        self,
        model: PriorQueryTransformer,
        step: int,
        stage: str,
        final: bool = False,
        extra: Optional[Dict[str, Any]] = None,
    ) -> str:
        """
        Save `model` and return the checkpoint path.

        The file is written next to its destination and renamed into place, so
        a checkpoint on disk is always complete.
        """
        name = self.final_name(stage) if final else f"ckpt_{stage}_{step:07d}.pt"
        path = os.path.join(self.checkpoint_dir, name)
        try:
            payload = {
                'format': CHECKPOINT_FORMAT,
                'format_version': CHECKPOINT_FORMAT_VERSION,
                'app_version': get_version(),
                'timestamp': datetime.now().isoformat(),
                'config': model.cfg.to_dict(),
                'state_dict': {k: v.detach().cpu() for k, v in model.state_dict().items()},
                'step': int(step),
                'stage': stage,
                'parameter_hash': parameter_hash(model),
                'extra': extra or {},
            }
            tmp_path = path + ".tmp"
            torch.save(payload, tmp_path)
            os.replace(tmp_path, path)
            self.logger.info(f"Checkpoint saved: {path}")
        except Exception as e:
            ErrorLogger.log_error(e, {'action': 'save_checkpoint', 'path': path, 'step': step, 'stage': stage})
            raise
        if not final:
            self._enforce_retention_policy(stage)
        return path

    def periodic(self, stage: Optional[str] = None) -> List[Tuple[int, str]]:
        """(step, path) of the periodic checkpoints, oldest first."""
        found = []
        for f in os.listdir(self.checkpoint_dir):
            match = _PERIODIC.match(f)
            if match and (stage is None or match.group("stage") == stage):
                found.append((int(match.group("step")), os.path.join(self.checkpoint_dir, f)))
        return sorted(found)

    def latest(self, stage: Optional[str] = None) -> Optional[str]:
        """Final checkpoint of `stage` if present, else its newest periodic one."""
        if stage is not None:
            final = os.path.join(self.checkpoint_dir, self.final_name(stage))
            if os.path.isfile(final):
                return final
        periodic = self.periodic(stage)
        return periodic[-1][1] if periodic else None

    def _enforce_retention_policy(self, stage: str) -> None:
        """Remove the oldest periodic checkpoints of a stage beyond `max_checkpoints`."""
        checkpoints = self.periodic(stage)
        while len(checkpoints) > self.max_checkpoints:
            _, oldest = checkpoints.pop(0)
            try:
                os.remove(oldest)
                self.logger.info(f"Removed old checkpoint: {oldest}")
            except OSError as e:
                self.logger.error(f"Failed to remove old checkpoint {oldest}: {e}")

    @staticmethod
    def load(path: str, map_location: str = "cpu") -> CheckpointInfo:
        """
        Restore a model from a checkpoint file.

        Raises:
            FileNotFoundError: the file does not exist
            DataError: the file is not a checkpoint, has an incompatible major version,
                or holds weights that do not fit its model configuration
        """
        if not os.path.isfile(path):
            raise FileNotFoundError(f"Checkpoint not found: {path}")
        try:
            payload = torch.load(path, map_location=map_location, weights_only=True)
        except Exception as e:
            raise DataError(f"Cannot read checkpoint {path}: {e}") from e

        if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
            raise DataError(f"{path} is not a nighthaze checkpoint")
        version = str(payload.get('format_version', ''))
        if not is_compatible_version(version, CHECKPOINT_FORMAT_VERSION):
            raise DataError(
                f"checkpoint format {version} of {path} is incompatible with {CHECKPOINT_FORMAT_VERSION}"
            )

        try:
            config = ModelConfig.from_dict(payload['config'])
            model = PriorQueryTransformer(config)
            model.load_state_dict(payload['state_dict'])
            step, stage = int(payload['step']), str(payload['stage'])
            weights_hash = str(payload['parameter_hash'])
        except (KeyError, TypeError, ValueError, RuntimeError) as e:
            raise DataError(f"checkpoint {path} does not match its model configuration: {e}") from e
        model.eval()
        return CheckpointInfo(
            model=model,
            config=config,
            step=step,
            stage=stage,
            parameter_hash=weights_hash,
            path=path,
            app_version=str(payload.get('app_version', 'unknown')),
            extra=dict(payload.get('extra', {})),
        )
