"""Dark/bright channel priors, transmissions, matting Laplacian and guided filter."""

from .priors import (
    AtmosphericLight,
    MattingLaplacian,
    PriorMaps,
    bcp_transmission,
    bright_channel,
    bright_channel_torch,
    build_matting_laplacian,
    compute_prior_maps,
    dark_channel,
    dark_channel_torch,
    dcp_transmission,
    estimate_atmospheric_light,
    guided_filter,
)

__all__ = [
    'AtmosphericLight',
    'MattingLaplacian',
    'PriorMaps',
    'bcp_transmission',
    'bright_channel',
    'bright_channel_torch',
    'build_matting_laplacian',
    'compute_prior_maps',
    'dark_channel',
    'dark_channel_torch',
    'dcp_transmission',
    'estimate_atmospheric_light',
    'guided_filter',
]
