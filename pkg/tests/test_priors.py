import logging

import numpy as np
import pytest
import torch

from src.physics.priors import (
    AIRLIGHT_FLOOR,
    AtmosphericLight,
    bcp_transmission,
    box_filter,
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
from src.utils.exceptions import NumericGuardError, ParameterError, ResourceLimitError

logger = logging.getLogger(__name__)


def _naive_window(channel_map, patch, reduce):
    """Quadruple-loop reference with edge replication (the clipped window has the same extremum)."""
    height, width = channel_map.shape
    r = patch // 2
    out = np.empty_like(channel_map)
    for y in range(height):
        for x in range(width):
            best = channel_map[min(max(y - r, 0), height - 1), min(max(x - r, 0), width - 1)]
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    value = channel_map[min(max(y + dy, 0), height - 1), min(max(x + dx, 0), width - 1)]
                    best = reduce(best, value)
            out[y, x] = best
    return out


@pytest.mark.parametrize("patch", [1, 3, 5])
def test_dark_and_bright_channel_match_reference(patch):
    rng = np.random.default_rng(patch)
    for _ in range(50):
        img = rng.random((16, 16, 3))
        assert np.array_equal(dark_channel(img, patch), _naive_window(img.min(axis=2), patch, min))
        assert np.array_equal(bright_channel(img, patch), _naive_window(img.max(axis=2), patch, max))


def test_prior_examples():
    assert np.all(dark_channel(np.ones((4, 4, 3)), 3) == 1.0)
    img = np.zeros((5, 5, 3))
    img[2, 2] = 1.0
    bright = bright_channel(img, 3)
    assert bright[1:4, 1:4].min() == 1.0 and bright[0, 0] == 0.0


def test_prior_bounds_and_monotonicity(rng):
    low = rng.random((12, 12, 3)) * 0.5
    high = np.clip(low + rng.random((12, 12, 3)) * 0.5, 0.0, 1.0)
    assert np.all(dark_channel(low, 5) <= low.min(axis=2))
    assert np.all(bright_channel(low, 5) >= low.max(axis=2))
    assert np.all(dark_channel(low, 5) <= dark_channel(high, 5))
    assert np.all(bright_channel(low, 5) <= bright_channel(high, 5))


def test_torch_twins_agree(rng):
    img = rng.random((9, 11, 3))
    tensor = torch.from_numpy(img.transpose(2, 0, 1)[None].copy())
    for patch in (1, 3, 7):
        assert np.allclose(dark_channel_torch(tensor, patch)[0, 0].numpy(), dark_channel(img, patch))
        assert np.allclose(bright_channel_torch(tensor, patch)[0, 0].numpy(), bright_channel(img, patch))


def test_even_patch_rejected(rng):
    with pytest.raises(ParameterError):
        dark_channel(rng.random((4, 4, 3)), 4)
    maps = compute_prior_maps(rng.random((6, 6, 3)), 3)
    assert np.allclose(maps.prior_sum, maps.dark + maps.bright)


def test_atmospheric_light_from_brightest_dark_pixels():
    img = np.full((20, 20, 3), 0.1)
    img[:8, :8] = (0.9, 0.8, 0.7)
    light = estimate_atmospheric_light(img, patch=3, fraction=0.01)
    assert np.allclose(light.a, (0.9, 0.8, 0.7))


def test_atmospheric_light_floor_on_black_image():
    light = estimate_atmospheric_light(np.zeros((5, 5, 3)), patch=3)
    assert np.allclose(light.a, AIRLIGHT_FLOOR)


def test_atmospheric_light_validation():
    with pytest.raises(ParameterError):
        AtmosphericLight(np.zeros(3))
    with pytest.raises(ParameterError):
        AtmosphericLight(np.array([0.5, 1.5, 0.5]))


def test_transmissions_stay_in_range(rng):
    for _ in range(10):
        img = rng.random((10, 10, 3))
        light = estimate_atmospheric_light(img, 5)
        for t in (dcp_transmission(img, light, 5), bcp_transmission(img, light, 5)):
            assert t.min() >= 0.05 and t.max() <= 1.0


def test_dcp_transmission_of_airlight_image_is_clamped_low():
    a = np.array([0.6, 0.6, 0.6])
    t = dcp_transmission(np.broadcast_to(a, (6, 6, 3)).copy(), a, patch=3)
    assert np.allclose(t, 0.05)


def test_dcp_transmission_zero_light_component():
    with pytest.raises(NumericGuardError):
        dcp_transmission(np.full((4, 4, 3), 0.5), [0.5, 0.0, 0.5], patch=3)


def test_bcp_transmission_degenerate_light_is_one(rng):
    t = bcp_transmission(rng.random((6, 6, 3)), [1.0, 0.5, 0.5], patch=3)
    assert np.all(t == 1.0)


def test_matting_laplacian_invariants():
    rng = np.random.default_rng(42)
    for _ in range(20):
        L = build_matting_laplacian(rng.random((8, 8, 3)), window=3, epsilon=1e-7)
        dense = L.matrix.toarray()
        assert np.array_equal(dense, dense.T)
        assert np.max(np.abs(dense.sum(axis=1))) <= 1e-10
        assert np.linalg.eigvalsh(dense).min() >= -1e-8


def test_matting_laplacian_annihilates_constants(rng):
    L = build_matting_laplacian(rng.random((6, 6, 3)))
    assert abs(L.quadratic(np.full((6, 6), 0.7))) <= 1e-10
    assert L.as_torch().shape == (36, 36)


def test_matting_laplacian_size_guard():
    with pytest.raises(ResourceLimitError):
        build_matting_laplacian(np.zeros((65, 65, 3)))


def test_guided_filter_constant_source(rng):
    guide = rng.random((10, 10, 3))
    assert np.allclose(guided_filter(guide, np.full((10, 10), 0.3), radius=2), 0.3)


def test_guided_filter_large_eps_is_box_mean(rng):
    src = rng.random((12, 12))
    expected = box_filter(box_filter(src, 2), 2)
    assert np.allclose(guided_filter(rng.random((12, 12, 3)), src, radius=2, eps=1e6), expected, atol=1e-4)


def _reference_guided_filter(guide, src, radius, eps):
    """Direct per-window formula with the same symmetric border handling."""
    pad = ((radius, radius), (radius, radius))
    g = np.pad(guide, pad + ((0, 0),), mode="symmetric")
    p = np.pad(src, pad, mode="symmetric")
    height, width = src.shape
    a = np.zeros((height, width, 3))
    b = np.zeros((height, width))
    size = 2 * radius + 1
    for y in range(height):
        for x in range(width):
            gi = g[y:y + size, x:x + size].reshape(-1, 3)
            pi = p[y:y + size, x:x + size].reshape(-1)
            mu = gi.mean(axis=0)
            sigma = (gi - mu).T @ (gi - mu) / len(pi)
            cov = (gi * pi[:, None]).mean(axis=0) - mu * pi.mean()
            a[y, x] = np.linalg.solve(sigma + eps * np.eye(3), cov)
            b[y, x] = pi.mean() - a[y, x] @ mu
    a_pad = np.pad(a, pad + ((0, 0),), mode="symmetric")
    b_pad = np.pad(b, pad, mode="symmetric")
    q = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            q[y, x] = a_pad[y:y + size, x:x + size].reshape(-1, 3).mean(axis=0) @ guide[y, x] + b_pad[y:y + size, x:x + size].mean()
    return np.clip(q, 0.0, 1.0)


def test_guided_filter_matches_direct_formula(rng):
    src = rng.random((8, 8))
    guide = np.repeat(src[..., None], 3, axis=2)
    expected = _reference_guided_filter(guide, src, radius=1, eps=1e-2)
    assert np.allclose(guided_filter(guide, src, radius=1, eps=1e-2), expected, atol=1e-10)
