"""
Version management for nighthaze.

Application versions follow Semantic Versioning 2.0.0. Checkpoints carry their
own format version, and only the major component decides whether a file loads.
"""

from typing import Any, Dict

__version__ = "1.0.0"
__version_info__ = {
    "version": __version__,
    "major": 1,
    "minor": 0,
    "patch": 0,
    "release_date": "2026-10-17",
}

# Bumped whenever the checkpoint dictionary layout changes
CHECKPOINT_FORMAT = "nighthaze-checkpoint"
CHECKPOINT_FORMAT_VERSION = "1.0"


def get_version() -> str:
    return __version__


def get_version_info() -> Dict[str, Any]:
    """Application and checkpoint format versions, as recorded in error reports."""
    info = dict(__version_info__)
    info["checkpoint_format"] = CHECKPOINT_FORMAT_VERSION
    return info


def is_compatible_version(other_version: str, current_version: str = __version__) -> bool:
    """
    True when both versions share the major component.

    Unparseable versions are never compatible.
    """
    try:
        current_major = int(str(current_version).split('.')[0])
        other_major = int(str(other_version).split('.')[0])
    except (ValueError, IndexError):
        return False
    return current_major == other_major
