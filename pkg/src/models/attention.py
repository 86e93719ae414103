"""
Scaled dot-product attention with prior queries.

`multi_head_attention` is the functional core shared by the decoder's
cross-attention and the window self-attention of the ViT ablation block.
"""
import math
from typing import Tuple

import torch
import torch.nn as nn
from einops import rearrange

from ..utils.exceptions import ShapeError


def multi_head_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    heads: int,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Softmax(Q K^T / sqrt(d)) V per head, d = per-head dimension.

    Args:
        q: (B, Nq, D) queries
        k: (B, Nk, D) keys
        v: (B, Nk, Dv) values
        heads: number of heads; must divide D and Dv

    Returns:
        (out, weights): out is (B, Nq, Dv) with heads concatenated,
        weights is (B, heads, Nq, Nk) and every row sums to one.
    """
    if q.dim() != 3 or k.dim() != 3 or v.dim() != 3:
        raise ShapeError("q, k and v must be (batch, tokens, dim) tensors")
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query dim {q.shape[-1]} does not match key dim {k.shape[-1]}")
    if k.shape[1] != v.shape[1] or not (q.shape[0] == k.shape[0] == v.shape[0]):
        raise ShapeError(f"incompatible shapes q={tuple(q.shape)} k={tuple(k.shape)} v={tuple(v.shape)}")
    if heads < 1 or q.shape[-1] % heads or v.shape[-1] % heads:
        raise ShapeError(f"dims {q.shape[-1]} and {v.shape[-1]} are not divisible by {heads} heads")

    qh = rearrange(q, "b n (h d) -> b h n d", h=heads)
    kh = rearrange(k, "b m (h d) -> b h m d", h=heads)
    vh = rearrange(v, "b m (h d) -> b h m d", h=heads)

    scores = torch.einsum("bhnd,bhmd->bhnm", qh, kh) / math.sqrt(qh.shape[-1])
    weights = scores.softmax(dim=-1)
    out = torch.einsum("bhnm,bhmd->bhnd", weights, vh)
    return rearrange(out, "b h n d -> b n (h d)"), weights


class PriorCrossAttention(nn.Module):
    """
    Cross-attention with prior-query tokens as Q and latent tokens as K and V.

    Queries live in `embed_dim`; keys and values are projected from the latent
    channels, and the concatenated heads are projected back to latent channels.
    """

    def __init__(self, embed_dim: int, latent_channels: int, heads: int):
        super().__init__()
        if embed_dim % heads:
            raise ShapeError(f"embed_dim {embed_dim} is not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = nn.Linear(embed_dim, embed_dim)
        self.k_proj = nn.Linear(latent_channels, embed_dim)
        self.v_proj = nn.Linear(latent_channels, embed_dim)
        self.out_proj = nn.Linear(embed_dim, latent_channels)

    def forward(self, queries: torch.Tensor, latent: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        out, weights = multi_head_attention(
            self.q_proj(queries), self.k_proj(latent), self.v_proj(latent), self.heads
        )
        return self.out_proj(out), weights


class WindowSelfAttention(nn.Module):
    """Multi-head self-attention inside non-overlapping square windows."""

    def __init__(self, channels: int, heads: int, window: int):
        super().__init__()
        if channels % heads:
            raise ShapeError(f"channels {channels} are not divisible by {heads} heads")
        self.heads = heads
        self.window = window
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, _, height, width = x.shape
        win = max(1, min(self.window, height, width))
        pad_h, pad_w = (-height) % win, (-width) % win
        if pad_h or pad_w:
            x = nn.functional.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
        rows, cols = x.shape[2] // win, x.shape[3] // win

        tokens = rearrange(x, "b c (h wh) (w ww) -> (b h w) (wh ww) c", wh=win, ww=win)
        q, k, v = self.qkv(tokens).chunk(3, dim=-1)
        out, _ = multi_head_attention(q, k, v, self.heads)
        out = self.proj(out)
        out = rearrange(out, "(b h w) (wh ww) c -> b c (h wh) (w ww)", h=rows, w=cols, wh=win, ww=win)
        return out[:, :, :height, :width]
