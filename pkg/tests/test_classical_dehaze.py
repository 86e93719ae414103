import logging

import numpy as np
import pytest

from src.analysis.metrics import psnr
from src.dehaze.classical import (
    BccrParams,
    boundary_constraint,
    contextual_objective,
    contextual_regularize,
    contextual_weights,
    dehaze_bccr,
    dehaze_dcp,
    recover_radiance,
    weighted_tv,
)
from src.physics.priors import estimate_atmospheric_light
from src.utils.exceptions import DimensionError, NumericGuardError, ParameterError

logger = logging.getLogger(__name__)

AIRLIGHT = np.array([0.8, 0.8, 0.8])
T_TRUE = 0.6
C0 = 20 / 255


def _bounded_scene(seed, size=24, sky=0):
    """
    A clean image whose every 3x3 window touches the lower radiance bound c0,
    hazed with a constant transmission. The top-left `sky` x `sky` block equals
    the airlight so the airlight estimator can find it.
    """
    rng = np.random.default_rng(seed)
    clean = rng.uniform(0.1, 1.0, size=(size, size, 3))
    clean[::2, ::2, 0] = C0
    if sky:
        clean[:sky, :sky] = AIRLIGHT
    hazy = clean * T_TRUE + AIRLIGHT * (1.0 - T_TRUE)
    return hazy, clean


def test_params_round_trip_and_hash():
    p = BccrParams(lambda_reg=3.0)
    assert BccrParams.from_dict(p.to_dict()) == p
    assert p.params_hash() == BccrParams(lambda_reg=3.0).params_hash()
    assert p.params_hash() != BccrParams().params_hash()


def test_params_validation():
    with pytest.raises(ParameterError):
        BccrParams(c0=(0.5, 0.5, 0.5), c1=(0.4, 0.4, 0.4))
    with pytest.raises(ParameterError):
        BccrParams(iters=0)


def test_boundary_constraint_recovers_true_transmission():
    hazy, _ = _bounded_scene(0)
    t_b = boundary_constraint(hazy, AIRLIGHT, BccrParams())
    assert np.allclose(t_b, T_TRUE, atol=1e-9)


def test_boundary_constraint_never_exceeds_true_transmission():
    rng = np.random.default_rng(3)
    clean = rng.uniform(0.1, 1.0, size=(16, 16, 3))
    hazy = clean * T_TRUE + AIRLIGHT * (1.0 - T_TRUE)
    p = BccrParams(patch=1)
    assert np.all(boundary_constraint(hazy, AIRLIGHT, p) <= T_TRUE + 1e-9)


def test_boundary_constraint_light_on_bound():
    with pytest.raises(NumericGuardError):
        boundary_constraint(np.full((4, 4, 3), 0.5), [C0, C0, C0], BccrParams())


def test_recovery_with_true_transmission_is_exact():
    hazy, clean = _bounded_scene(1)
    p = BccrParams()
    t = contextual_regularize(boundary_constraint(hazy, AIRLIGHT, p), hazy, p)
    restored = recover_radiance(hazy, t, AIRLIGHT, p.t_min)
    assert psnr(restored, clean) >= 40.0


def test_contextual_objective_never_increases(rng):
    img = rng.random((20, 20, 3))
    t_b = np.clip(rng.random((20, 20)), 0.05, 1.0)
    p = BccrParams(iters=6)
    trace = []
    t = contextual_regularize(t_b, img, p, objective_trace=trace)
    assert len(trace) == p.iters + 1
    assert all(later <= earlier + 1e-12 for earlier, later in zip(trace, trace[1:]))
    weights = contextual_weights(img, p.weight_sigma)
    assert trace[-1] == pytest.approx(contextual_objective(t, t_b, weights, p.lambda_reg))
    assert weighted_tv(t, weights) <= weighted_tv(t_b, weights) + 1e-12


def test_regularize_constant_map_is_fixed_point(rng):
    t_b = np.full((10, 10), 0.4)
    assert np.allclose(contextual_regularize(t_b, rng.random((10, 10, 3)), BccrParams()), 0.4)


def test_regularize_size_mismatch(rng):
    with pytest.raises(DimensionError):
        contextual_regularize(np.full((4, 4), 0.5), rng.random((4, 5, 3)), BccrParams())


def test_regularize_with_heavy_data_weight_keeps_boundary_map(rng):
    t_b = rng.uniform(0.2, 0.9, size=(16, 16))
    t = contextual_regularize(t_b, rng.random((16, 16, 3)), BccrParams(lambda_reg=1e6))
    assert np.abs(t - t_b).max() <= 1e-3


def test_bccr_leaves_haze_free_scene_nearly_unchanged():
    _, clean = _bounded_scene(6, size=24)
    out = dehaze_bccr(clean, BccrParams())
    assert np.abs(out - clean).mean() <= 0.1


def test_recover_radiance_clamps():
    out = recover_radiance(np.full((3, 3, 3), 0.95), np.full((3, 3), 0.05), [0.1, 0.1, 0.1])
    assert out.max() == 1.0


def test_bccr_improves_hazy_scenes():
    p = BccrParams()
    improved = 0
    for seed in range(10):
        hazy, clean = _bounded_scene(seed, size=48, sky=20)
        improved += psnr(dehaze_bccr(hazy, p), clean) > psnr(hazy, clean)

        light = estimate_atmospheric_light(hazy, p.airlight_patch, p.airlight_fraction)
        t = contextual_regularize(boundary_constraint(hazy, light, p), hazy, p)
        ground = np.ones((48, 48), dtype=bool)
        ground[:20, :20] = False
        assert np.abs(t[ground] - T_TRUE).mean() <= 0.15
    assert improved >= 9


def test_outputs_in_unit_range(rng):
    p = BccrParams(iters=2)
    for _ in range(100):
        img = rng.random((8, 8, 3))
        out = dehaze_bccr(img, p)
        assert out.min() >= 0.0 and out.max() <= 1.0
    out = dehaze_dcp(rng.random((16, 16, 3)), patch=3, radius=2)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_dehaze_dcp_improves_hazy_scene():
    hazy, clean = _bounded_scene(4, size=48, sky=20)
    restored = dehaze_dcp(hazy, patch=3, radius=2)
    assert restored.shape == hazy.shape
    assert psnr(restored, clean) > psnr(hazy, clean)
