"""Procedural nighttime-haze dataset synthesis."""

from .haze_synth import (
    Degradation,
    DegradationConfig,
    DegradationRanges,
    DepthStyle,
    LightSource,
    SceneRanges,
    SceneSpec,
    apply_degradations,
    compose_haze,
    compose_haze_components,
    generate_dataset,
    render_clean_scene,
    sample_lights,
)

__all__ = [
    'Degradation',
    'DegradationConfig',
    'DegradationRanges',
    'DepthStyle',
    'LightSource',
    'SceneRanges',
    'SceneSpec',
    'apply_degradations',
    'compose_haze',
    'compose_haze_components',
    'generate_dataset',
    'render_clean_scene',
    'sample_lights',
]
