"""
Configuration for nighthaze.

Settings live in a structured text file (`[section]` headers, `key = value`
lines). Every key has a typed default in DEFAULT_SETTINGS; values read from a
file or given as `section.key=value` overrides are coerced to the type of that
default. The builders at the bottom turn sections into the typed configuration
objects used by the library.
"""
import configparser
import copy
import logging
import os
from typing import Any, Dict, Iterable, Optional, Tuple

from .utils.exceptions import ParameterError

logger = logging.getLogger(__name__)

# Get the absolute path of the project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(PROJECT_ROOT, "config")

# Configuration files
SETTINGS_FILE = os.path.join(CONFIG_DIR, "settings.ini")
FULL_SETTINGS_FILE = os.path.join(CONFIG_DIR, "full.ini")

STAGES = ("pretrain", "unsupervised", "finetune")

Settings = Dict[str, Dict[str, Any]]

_STAGE_DEFAULTS = {
    "lr": 2e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "batch": 4,
    "steps": 2000,
    "crop": 64,
    "cyclic_max_ratio": 1.2,
    "cycle_step": 1000,
    "checkpoint_every": 500,
    "max_checkpoints": 3,
    "log_every": 50,
    "augment": True,
}

# Default settings
DEFAULT_SETTINGS: Settings = {
    "general": {
        "seed": 0,
        "log_level": "INFO",
        "run_dir": "runs",
        "log_dir": "logs",
        "num_workers": 0,
    },
    "model": {
        "base_width": 16,
        "num_scales": 3,
        "blocks_per_scale": (1, 1),
        "decoder_blocks_per_scale": (1, 1),
        "bottleneck_blocks": 8,
        "heads": 4,
        "embed_dim": 64,
        "mlp_hidden": 64,
        "dw_expand": 2,
        "ffn_expand": 2,
        "prior_mode": "full",
        "positional_embedding": True,
        "pos_grid": 8,
        "block_type": "naf",
        "vit_window": 4,
    },
    "pretrain": dict(_STAGE_DEFAULTS),
    "unsupervised": dict(_STAGE_DEFAULTS, lr=5e-5, steps=500, checkpoint_every=250),
    "finetune": dict(_STAGE_DEFAULTS, lr=5e-5, steps=500, checkpoint_every=250, synthetic_mix=0.0, cycles=1),
    "supervised_loss": {
        "lambda_per": 0.2,
        "feature_layers": (0, 1),
        "psnr_eps": 1e-10,
        "extractor_seed": 0,
    },
    "unsupervised_loss": {
        "lambda_dcp": 1e-4,
        "lambda_bcp": 1e-4,
        "lambda_spa": 5.0,
        "lambda_exp": 1e-3,
        "lambda_col": 0.2,
        "dcp_inner_lambda": 1e-4,
        "exposure_level": 0.6,
        "spa_region": 4,
        "exp_region": 16,
        "loss_size": 32,
        "matting_window": 3,
        "matting_epsilon": 1e-7,
    },
    "priors": {
        "patch": 5,
        "omega": 0.95,
        "t_min": 0.05,
        "airlight_fraction": 0.001,
    },
    "bccr": {
        "c0": (20 / 255, 20 / 255, 20 / 255),
        "c1": (300 / 255, 300 / 255, 300 / 255),
        "patch": 3,
        "lambda_reg": 2.0,
        "iters": 8,
        "weight_sigma": 0.5,
        "beta0": 1.0,
        "beta_rate": 2.0 * 2.0 ** 0.5,
        "t_min": 0.05,
        "airlight_patch": 15,
        "airlight_fraction": 0.001,
    },
    "synth": {
        "count": 16,
        "size": (96, 96),
        "num_lights": (1, 5),
        "haze_beta": (0.5, 2.0),
        "ambient": (0.03, 0.15),
        "texture": (0.03, 0.1),
        "depth_styles": ("linear-ramp", "blobs", "mixed"),
        "glow_strength": (0.1, 0.4),
        "bloom_threshold": (0.7, 0.9),
        "blur_len": (1, 5),
        "noise_sigma": (0.0, 0.02),
        "degradations": ("glow", "bloom", "blur", "noise"),
        "crop": 0,
        "crops_per_image": 1,
        "fractions": (0.8, 0.1, 0.1),
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce_scalar(raw: str, template: Any, key: str) -> Any:
    raw = raw.strip()
    try:
        if isinstance(template, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
    except ValueError as e:
        raise ParameterError(f"{key}: cannot read {raw!r} as {type(template).__name__}") from e
    return raw


def coerce_value(raw: Any, template: Any, key: str = "value") -> Any:
    """Convert `raw` (usually a string) to the type of `template`."""
    if isinstance(template, tuple):
        if isinstance(raw, str):
            items = [item for item in raw.replace(",", " ").split() if item]
        else:
            items = list(raw)
        element = template[0] if template else ""
        return tuple(_coerce_scalar(str(item), element, key) for item in items)
    if not isinstance(raw, str):
        raw = str(raw)
    return _coerce_scalar(raw, template, key)


def format_value(value: Any) -> str:
    """Inverse of coerce_value for writing settings files."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _template(section: str, key: str) -> Any:
    if section not in DEFAULT_SETTINGS:
        raise ParameterError(f"unknown settings section [{section}]")
    if key not in DEFAULT_SETTINGS[section]:
        raise ParameterError(f"unknown setting {section}.{key}")
    return DEFAULT_SETTINGS[section][key]


def default_settings() -> Settings:
    return copy.deepcopy(DEFAULT_SETTINGS)


def load_settings(path: Optional[str] = None) -> Settings:
    """
    Load settings from an INI file, filling missing keys with defaults.

    Args:
        path: Settings file. None uses config/settings.ini and falls back to
            the built-in defaults when that file does not exist.

    Returns:
        Settings: Nested dict of typed values

    Raises:
        FileNotFoundError: An explicit path does not exist
        ParameterError: Unknown section or key, or a value of the wrong type
    """
    settings = default_settings()
    if path is None:
        path = SETTINGS_FILE
        if not os.path.exists(path):
            logger.debug("No settings file found, using defaults")
            return settings
    if not os.path.exists(path):
        raise FileNotFoundError(f"Settings file not found: {path}")

    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ParameterError(f"Error reading settings {path}: {e}") from e

    for section in parser.sections():
        for key, raw in parser.items(section):
            settings[section][key] = coerce_value(raw, _template(section, key), f"{section}.{key}")
    logger.debug(f"Loaded settings from {path}")
    return settings


def save_settings(settings: Settings, path: str) -> str:
    """Save settings to an INI file; returns the path."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, values in settings.items():
        parser[section] = {key: format_value(value) for key, value in values.items()}
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)
    return path


def _split_key(dotted: str) -> Tuple[str, str]:
    section, sep, key = dotted.partition(".")
    if not sep or not section or not key:
        raise ParameterError(f"setting names have the form section.key, got {dotted!r}")
    return section, key


def get_setting(settings: Settings, dotted: str, default: Any = None) -> Any:
    """Get a specific setting value by `section.key`."""
    section, key = _split_key(dotted)
    return settings.get(section, {}).get(key, default)


def update_setting(settings: Settings, dotted: str, value: Any) -> None:
    """Set `section.key`, coercing the value to the default's type."""
    section, key = _split_key(dotted)
    settings[section][key] = coerce_value(value, _template(section, key), dotted)


def apply_overrides(settings: Settings, overrides: Iterable[str]) -> Settings:
    """Return a copy of `settings` with `section.key=value` overrides applied."""
    result = copy.deepcopy(settings)
    for item in overrides or ():
        dotted, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"override must look like section.key=value, got {item!r}")
        update_setting(result, dotted.strip(), value)
    return result


# Builders. Imports are local so that reading settings never pulls in torch.

def model_config(settings: Settings):
    from .models.network import ModelConfig

    values = dict(settings["model"])
    values["prior_patch"] = settings["priors"]["patch"]
    values["blocks_per_scale"] = list(values["blocks_per_scale"])
    values["decoder_blocks_per_scale"] = list(values["decoder_blocks_per_scale"])
    return ModelConfig.from_dict(values)


def supervised_loss_config(settings: Settings):
    from .training.losses import SupervisedLossConfig

    values = dict(settings["supervised_loss"])
    values["feature_layers"] = list(values["feature_layers"])
    return SupervisedLossConfig.from_dict(values)


def unsupervised_loss_config(settings: Settings):
    from .training.losses import UnsupervisedLossConfig

    priors = settings["priors"]
    values = dict(settings["unsupervised_loss"])
    values.update(
        prior_patch=priors["patch"],
        omega=priors["omega"],
        t_min=priors["t_min"],
        airlight_fraction=priors["airlight_fraction"],
    )
    return UnsupervisedLossConfig(**values)


def bccr_params(settings: Settings):
    from .dehaze.classical import BccrParams

    return BccrParams.from_dict(settings["bccr"])


def train_config(settings: Settings, stage: str):
    """TrainConfig of one stage with the loss sections and general seed folded in."""
    from .training.trainer import TrainConfig

    if stage not in STAGES:
        raise ParameterError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    section = dict(settings[stage])
    return TrainConfig(
        stage=stage,
        lr=section["lr"],
        betas=(section["beta1"], section["beta2"]),
        batch=section["batch"],
        steps=section["steps"],
        crop=section["crop"],
        cyclic_max_ratio=section["cyclic_max_ratio"],
        cycle_step=section["cycle_step"],
        seed=settings["general"]["seed"],
        checkpoint_every=section["checkpoint_every"],
        max_checkpoints=section["max_checkpoints"],
        log_every=section["log_every"],
        augment=section["augment"],
        synthetic_mix=section.get("synthetic_mix", 0.0),
        num_workers=settings["general"]["num_workers"],
        supervised_loss=supervised_loss_config(settings),
        unsupervised_loss=unsupervised_loss_config(settings),
        extractor_seed=settings["supervised_loss"]["extractor_seed"],
    )


def scene_ranges(settings: Settings):
    from .synthesis.haze_synth import SceneRanges

    s = settings["synth"]
    return SceneRanges(
        size=tuple(s["size"]),
        num_lights=tuple(s["num_lights"]),
        haze_beta=tuple(s["haze_beta"]),
        ambient=tuple(s["ambient"]),
        texture=tuple(s["texture"]),
        depth_styles=tuple(s["depth_styles"]),
    )


def degradation_ranges(settings: Settings):
    from .synthesis.haze_synth import DegradationRanges

    s = settings["synth"]
    return DegradationRanges(
        glow_strength=tuple(s["glow_strength"]),
        bloom_threshold=tuple(s["bloom_threshold"]),
        blur_len=tuple(s["blur_len"]),
        noise_sigma=tuple(s["noise_sigma"]),
        enabled=tuple(s["degradations"]),
    )
