"""Non-neural dehazers: BCCR and dark channel prior."""

from .classical import (
    BccrParams,
    boundary_constraint,
    contextual_objective,
    contextual_regularize,
    dehaze_bccr,
    dehaze_dcp,
    recover_radiance,
)

__all__ = [
    'BccrParams',
    'boundary_constraint',
    'contextual_objective',
    'contextual_regularize',
    'dehaze_bccr',
    'dehaze_dcp',
    'recover_radiance',
]
