import logging

import pytest
import torch

from src.models.blocks import NAFBlock, NafBlockSpec, ResBlock, ViTBlock
from src.models.network import (
    ModelConfig,
    PriorMode,
    build_model,
    compute_prior_queries,
    count_parameters,
    pad_to_multiple,
    parameter_hash,
    prior_tokens,
)
from src.utils.exceptions import ParameterError

logger = logging.getLogger(__name__)


def _tiny(**overrides):
    values = dict(
        base_width=8, num_scales=3, blocks_per_scale=[1, 1], decoder_blocks_per_scale=[1, 1],
        bottleneck_blocks=1, heads=2, embed_dim=16, mlp_hidden=16, prior_patch=3,
    )
    values.update(overrides)
    return ModelConfig(**values)


@pytest.mark.parametrize("size", [(64, 64), (96, 96), (128, 128), (50, 70)])
@pytest.mark.parametrize("batch", [1, 4])
def test_forward_preserves_shape(size, batch):
    model = build_model(_tiny(), seed=0).eval()
    with torch.no_grad():
        out = model(torch.rand(batch, 3, *size))
    assert out.shape == (batch, 3) + size
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_forward_is_deterministic():
    model = build_model(_tiny(), seed=0).eval()
    x = torch.rand(1, 3, 32, 32)
    with torch.no_grad():
        assert torch.equal(model(x), model(x))


def test_attention_rows_sum_to_one():
    model = build_model(_tiny(), seed=0).eval()
    with torch.no_grad():
        model(torch.rand(2, 3, 32, 48))
    weights = model.last_attention
    grid = 32 // 4 * (48 // 4)
    assert weights.shape == (2, 2, grid, grid)
    assert torch.allclose(weights.sum(dim=-1), torch.ones(2, 2, grid), atol=1e-6)


def test_zero_network_passes_input_through():
    model = build_model(_tiny(), seed=0).eval()
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    x = torch.rand(1, 3, 24, 40)
    with torch.no_grad():
        assert torch.allclose(model(x), x)


def test_prior_query_toggle_changes_output():
    torch.manual_seed(3)
    x = torch.rand(1, 3, 32, 32)
    with_priors = build_model(_tiny(), seed=0).eval()
    without = build_model(_tiny(prior_mode="none"), seed=0).eval()
    with torch.no_grad():
        assert (with_priors(x) - without(x)).abs().max() > 0


def test_prior_tokens_pool_the_prior_sum():
    cfg = _tiny(prior_patch=1)
    img = torch.full((1, 3, 8, 8), 0.25)
    img[:, 0] = 0.75
    tokens = prior_tokens(img, cfg)
    assert tokens.shape == (1, 4, 1)
    assert torch.allclose(tokens, torch.full((1, 4, 1), 1.0))
    none = prior_tokens(img, _tiny(prior_mode=PriorMode.NONE))
    assert torch.all(none == 0)


def test_zero_prior_mode_gives_zero_queries():
    cfg = _tiny(prior_mode="none")
    queries = compute_prior_queries(torch.rand(2, 3, 16, 16), cfg)
    assert queries.shape == (2, 16, cfg.embed_dim)
    assert torch.all(queries == 0)


def test_encoder_is_local_before_attention():
    cfg = _tiny(num_scales=4, blocks_per_scale=[1, 1, 1], decoder_blocks_per_scale=[1, 1, 1], prior_mode="none")
    model = build_model(cfg, seed=0).eval()
    x = torch.rand(1, 3, 64, 64)
    y = x.clone()
    y[:, :, 4, 4] += 0.5

    def bottleneck(img):
        features = model.intro(pad_to_multiple(img, cfg.downscale))
        for encoder, down in zip(model.encoders, model.downs):
            features = down(encoder(features))
        return features

    with torch.no_grad():
        changed = (bottleneck(x) - bottleneck(y)).abs().sum(dim=1)[0]
    assert changed[0, 0] > 0
    assert torch.all(changed[2:, :] == 0) and torch.all(changed[:, 2:] == 0)


def test_padding_pads_bottom_right():
    x = torch.rand(1, 3, 5, 6)
    padded = pad_to_multiple(x, 4)
    assert padded.shape == (1, 3, 8, 8)
    assert torch.equal(padded[:, :, :5, :6], x)
    tiny = pad_to_multiple(torch.rand(1, 3, 1, 1), 4)
    assert tiny.shape == (1, 3, 4, 4)


def test_parameter_count_is_pure_function_of_config():
    a = count_parameters(build_model(_tiny(), seed=0))
    b = count_parameters(build_model(_tiny(), seed=5))
    assert a == b
    assert count_parameters(build_model(_tiny(bottleneck_blocks=2), seed=0)) > a


def test_seeded_build_is_reproducible():
    assert parameter_hash(build_model(_tiny(), seed=1)) == parameter_hash(build_model(_tiny(), seed=1))
    assert parameter_hash(build_model(_tiny(), seed=1)) != parameter_hash(build_model(_tiny(), seed=2))


@pytest.mark.parametrize("block_type", ["res", "vit"])
def test_decoder_block_variants(block_type):
    model = build_model(_tiny(block_type=block_type), seed=0).eval()
    with torch.no_grad():
        assert model(torch.rand(1, 3, 20, 28)).shape == (1, 3, 20, 28)


def test_blocks_preserve_shape():
    x = torch.rand(2, 8, 6, 6)
    for block in (NAFBlock(NafBlockSpec(8)), ResBlock(8), ViTBlock(8, heads=2, window=4)):
        assert block(x).shape == x.shape


def test_config_validation_and_round_trip():
    cfg = _tiny(prior_mode="dcp", positional_embedding=False)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ParameterError):
        _tiny(embed_dim=15)
    with pytest.raises(ParameterError):
        _tiny(blocks_per_scale=[1])
    with pytest.raises(ParameterError):
        _tiny(prior_patch=4)
    with pytest.raises(ParameterError):
        NafBlockSpec(3, dw_expand=1)


def test_single_weight_gradient_matches_finite_difference():
    model = build_model(_tiny(), seed=0).double().train()
    x = torch.rand(1, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    weight = model.intro.weight
    index = (2, 1, 1, 1)

    model.zero_grad()
    model(x).sum().backward()
    analytic = weight.grad[index].item()

    h = 1e-3
    with torch.no_grad():
        original = weight[index].item()
        weight[index] = original + h
        plus = model(x).sum().item()
        weight[index] = original - h
        minus = model(x).sum().item()
        weight[index] = original
    numeric = (plus - minus) / (2 * h)
    assert abs(analytic - numeric) <= 1e-3 * max(abs(numeric), 1e-8)
