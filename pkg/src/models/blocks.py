"""
Convolutional building blocks.

NAFBlock is the default encoder, bottleneck and decoder block. ResBlock and
ViTBlock replace it in the decoder for the block ablation.
"""
from dataclasses import dataclass

import torch
import torch.nn as nn

from ..utils.exceptions import ParameterError
from .attention import WindowSelfAttention


@dataclass(frozen=True)
class NafBlockSpec:
    channels: int
    dw_expand: int = 2
    ffn_expand: int = 2

    def __post_init__(self):
        if self.channels < 1 or self.dw_expand < 1 or self.ffn_expand < 1:
            raise ParameterError(f"invalid NAF block spec {self}")
        # the simple gate splits the expanded channels in half
        if (self.channels * self.dw_expand) % 2 or (self.channels * self.ffn_expand) % 2:
            raise ParameterError(f"expanded channels must be even, got {self}")


class LayerNorm2d(nn.Module):
    """Layer normalization over the channel axis of (B, C, H, W) tensors."""

    def __init__(self, num_channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(num_channels))
        self.bias = nn.Parameter(torch.zeros(num_channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        u = x.mean(1, keepdim=True)
        s = (x - u).pow(2).mean(1, keepdim=True)
        x = (x - u) / torch.sqrt(s + self.eps)
        return self.weight[:, None, None] * x + self.bias[:, None, None]


class SimpleGate(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x1, x2 = x.chunk(2, dim=1)
        return x1 * x2


class NAFBlock(nn.Module):
    """
    Nonlinear-activation-free block.

    norm -> 1x1 expand -> 3x3 depthwise -> simple gate -> simplified channel
    attention -> 1x1, then norm -> 1x1 -> simple gate -> 1x1; both branches
    are added back with learnable per-channel scales that start at zero.
    """

    def __init__(self, spec: NafBlockSpec):
        super().__init__()
        c = spec.channels
        dw_channel = c * spec.dw_expand
        ffn_channel = c * spec.ffn_expand

        self.conv1 = nn.Conv2d(c, dw_channel, 1)
        self.conv2 = nn.Conv2d(dw_channel, dw_channel, 3, padding=1, groups=dw_channel)
        self.conv3 = nn.Conv2d(dw_channel // 2, c, 1)
        self.sca = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(dw_channel // 2, dw_channel // 2, 1),
        )
        self.sg = SimpleGate()

        self.conv4 = nn.Conv2d(c, ffn_channel, 1)
        self.conv5 = nn.Conv2d(ffn_channel // 2, c, 1)

        self.norm1 = LayerNorm2d(c)
        self.norm2 = LayerNorm2d(c)

        self.beta = nn.Parameter(torch.zeros((1, c, 1, 1)))
        self.gamma = nn.Parameter(torch.zeros((1, c, 1, 1)))

    def forward(self, inp: torch.Tensor) -> torch.Tensor:
        x = self.norm1(inp)
        x = self.conv2(self.conv1(x))
        x = self.sg(x)
        x = x * self.sca(x)
        x = self.conv3(x)
        y = inp + x * self.beta

        x = self.conv4(self.norm2(y))
        x = self.sg(x)
        x = self.conv5(x)
        return y + x * self.gamma


class ResBlock(nn.Module):
    """conv3x3 -> ReLU -> conv3x3 with an identity shortcut."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class ViTBlock(nn.Module):
    """Pre-norm transformer block: window self-attention, then a GELU MLP."""

    def __init__(self, channels: int, heads: int, window: int, mlp_ratio: int = 2):
        super().__init__()
        self.norm1 = LayerNorm2d(channels)
        self.attn = WindowSelfAttention(channels, heads, window)
        self.norm2 = LayerNorm2d(channels)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, channels * mlp_ratio, 1),
            nn.GELU(),
            nn.Conv2d(channels * mlp_ratio, channels, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))
