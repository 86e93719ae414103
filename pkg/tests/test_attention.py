import itertools
import logging
import math

import pytest
import torch

from src.models.attention import PriorCrossAttention, WindowSelfAttention, multi_head_attention
from src.utils.exceptions import ShapeError

logger = logging.getLogger(__name__)


def test_rows_sum_to_one():
    torch.manual_seed(0)
    q, k, v = torch.randn(2, 5, 8), torch.randn(2, 7, 8), torch.randn(2, 7, 4)
    out, weights = multi_head_attention(q, k, v, heads=2)
    assert out.shape == (2, 5, 4)
    assert weights.shape == (2, 2, 5, 7)
    assert torch.allclose(weights.sum(dim=-1), torch.ones(2, 2, 5), atol=1e-6)


def test_zero_queries_give_uniform_weights():
    torch.manual_seed(1)
    k, v = torch.randn(1, 6, 4), torch.randn(1, 6, 4)
    out, weights = multi_head_attention(torch.zeros(1, 3, 4), k, v, heads=1)
    assert (weights - 1.0 / 6).abs().max() <= 1e-7
    assert torch.allclose(out, v.mean(dim=1, keepdim=True).expand(1, 3, 4), atol=1e-6)


def test_three_token_example_matches_enumeration():
    q = torch.tensor([[[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]], dtype=torch.float64)
    k = torch.tensor([[[0.5, 0.0], [0.0, 1.0], [1.0, -1.0]]], dtype=torch.float64)
    v = torch.tensor([[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]], dtype=torch.float64)
    out, _ = multi_head_attention(q, k, v, heads=1)

    for i, j in itertools.product(range(3), range(2)):
        scores = [sum(q[0, i, d].item() * k[0, m, d].item() for d in range(2)) / math.sqrt(2) for m in range(3)]
        exps = [math.exp(s) for s in scores]
        expected = sum(e * v[0, m, j].item() for m, e in enumerate(exps)) / sum(exps)
        assert abs(out[0, i, j].item() - expected) <= 1e-9


def test_shape_errors():
    with pytest.raises(ShapeError):
        multi_head_attention(torch.zeros(1, 2, 4), torch.zeros(1, 2, 3), torch.zeros(1, 2, 4), heads=1)
    with pytest.raises(ShapeError):
        multi_head_attention(torch.zeros(1, 2, 4), torch.zeros(1, 2, 4), torch.zeros(1, 2, 4), heads=3)
    with pytest.raises(ShapeError):
        PriorCrossAttention(embed_dim=10, latent_channels=8, heads=4)


def test_cross_attention_projects_back_to_latent_channels():
    attention = PriorCrossAttention(embed_dim=16, latent_channels=32, heads=4)
    out, weights = attention(torch.randn(2, 9, 16), torch.randn(2, 9, 32))
    assert out.shape == (2, 9, 32)
    assert weights.shape == (2, 4, 9, 9)


def test_window_attention_handles_ragged_sizes():
    attention = WindowSelfAttention(channels=8, heads=2, window=4)
    x = torch.randn(1, 8, 6, 10)
    assert attention(x).shape == x.shape
