"""
Prior-query transformer for nighttime dehazing.

A multi-scale NAF encoder, a bottleneck of NAF blocks that produces the latent
features, one cross-attention stage whose queries are embedded dark+bright
channel priors, and a decoder that upsamples with additive skip fusion. The
network predicts a residual on top of the input image.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from ..physics.priors import bright_channel_torch, dark_channel_torch
from ..utils.exceptions import ParameterError, ResourceLimitError
from .attention import PriorCrossAttention
from .blocks import NAFBlock, NafBlockSpec, ResBlock, ViTBlock

logger = logging.getLogger(__name__)


class PriorMode(str, Enum):
    FULL = "full"
    DCP = "dcp"
    BCP = "bcp"
    NONE = "none"


class BlockType(str, Enum):
    NAF = "naf"
    RES = "res"
    VIT = "vit"


@dataclass
class ModelConfig:
    """
    Architecture of a PriorQueryTransformer.

    `blocks_per_scale` and `decoder_blocks_per_scale` list the block counts of
    the num_scales - 1 full and downsampled levels above the bottleneck, top first.
    """
    base_width: int = 16
    num_scales: int = 3
    blocks_per_scale: List[int] = field(default_factory=lambda: [1, 1])
    decoder_blocks_per_scale: List[int] = field(default_factory=lambda: [1, 1])
    bottleneck_blocks: int = 8
    heads: int = 4
    embed_dim: int = 64
    prior_patch: int = 5
    mlp_hidden: int = 64
    dw_expand: int = 2
    ffn_expand: int = 2
    prior_mode: PriorMode = PriorMode.FULL
    positional_embedding: bool = True
    pos_grid: int = 8
    block_type: BlockType = BlockType.NAF
    vit_window: int = 4

    def __post_init__(self):
        self.prior_mode = PriorMode(self.prior_mode)
        self.block_type = BlockType(self.block_type)
        self.blocks_per_scale = [int(n) for n in self.blocks_per_scale]
        self.decoder_blocks_per_scale = [int(n) for n in self.decoder_blocks_per_scale]
        if self.num_scales < 2:
            raise ParameterError(f"num_scales must be >= 2, got {self.num_scales}")
        levels = self.num_scales - 1
        if len(self.blocks_per_scale) != levels or len(self.decoder_blocks_per_scale) != levels:
            raise ParameterError(f"blocks_per_scale and decoder_blocks_per_scale need {levels} entries")
        if any(n < 0 for n in self.blocks_per_scale + self.decoder_blocks_per_scale) or self.bottleneck_blocks < 0:
            raise ParameterError("block counts must be >= 0")
        if self.heads < 1 or self.embed_dim % self.heads:
            raise ParameterError(f"embed_dim {self.embed_dim} must be divisible by heads {self.heads}")
        if self.base_width < 1 or self.mlp_hidden < 1:
            raise ParameterError("base_width and mlp_hidden must be >= 1")
        if self.prior_patch < 1 or self.prior_patch % 2 == 0:
            raise ParameterError(f"prior_patch must be odd, got {self.prior_patch}")
        if self.block_type == BlockType.VIT and self.base_width % self.heads:
            raise ParameterError("ViT decoder blocks need base_width divisible by heads")

    @property
    def downscale(self) -> int:
        return 2 ** (self.num_scales - 1)

    @property
    def bottleneck_channels(self) -> int:
        return self.base_width * self.downscale

    def token_grid(self, height: int, width: int) -> Tuple[int, int]:
        """Bottleneck grid for an input of height x width (after padding)."""
        f = self.downscale
        return -(-height // f), -(-width // f)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'base_width': self.base_width,
            'num_scales': self.num_scales,
            'blocks_per_scale': list(self.blocks_per_scale),
            'decoder_blocks_per_scale': list(self.decoder_blocks_per_scale),
            'bottleneck_blocks': self.bottleneck_blocks,
            'heads': self.heads,
            'embed_dim': self.embed_dim,
            'prior_patch': self.prior_patch,
            'mlp_hidden': self.mlp_hidden,
            'dw_expand': self.dw_expand,
            'ffn_expand': self.ffn_expand,
            'prior_mode': self.prior_mode.value,
            'positional_embedding': self.positional_embedding,
            'pos_grid': self.pos_grid,
            'block_type': self.block_type.value,
            'vit_window': self.vit_window,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def pad_to_multiple(x: torch.Tensor, multiple: int) -> torch.Tensor:
    """Reflect-pad bottom/right to a multiple; replicate when the image is too small to reflect."""
    _, _, height, width = x.shape
    pad_h, pad_w = (-height) % multiple, (-width) % multiple
    if not pad_h and not pad_w:
        return x
    mode = "reflect" if pad_h < height and pad_w < width else "replicate"
    return F.pad(x, (0, pad_w, 0, pad_h), mode=mode)


def prior_map(img: torch.Tensor, patch: int, mode: PriorMode) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 1, H, W) prior selected by `mode`; never carries gradient."""
    img = img.detach()
    if mode == PriorMode.FULL:
        return dark_channel_torch(img, patch) + bright_channel_torch(img, patch)
    if mode == PriorMode.DCP:
        return dark_channel_torch(img, patch)
    if mode == PriorMode.BCP:
        return bright_channel_torch(img, patch)
    return torch.zeros_like(img[:, :1])


def prior_tokens(img: torch.Tensor, cfg: ModelConfig) -> torch.Tensor:
    """
    Pre-MLP query tokens: the prior map average-pooled to the bottleneck grid.

    Returns (B, N, 1) with N = (H / 2^(s-1)) * (W / 2^(s-1)) after padding.
    """
    img = pad_to_multiple(img, cfg.downscale)
    pooled = F.avg_pool2d(prior_map(img, cfg.prior_patch, cfg.prior_mode), cfg.downscale)
    return rearrange(pooled, "b c h w -> b (h w) c")


class PriorQueryEmbedding(nn.Module):
    """Two-layer MLP from prior tokens to query embeddings, plus a learned positional grid."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.mlp = nn.Sequential(
            nn.Linear(1, cfg.mlp_hidden),
            nn.GELU(),
            nn.Linear(cfg.mlp_hidden, cfg.embed_dim),
        )
        if cfg.positional_embedding:
            self.pos = nn.Parameter(torch.zeros(1, cfg.embed_dim, cfg.pos_grid, cfg.pos_grid))
            nn.init.trunc_normal_(self.pos, std=0.02)
        else:
            self.register_parameter("pos", None)

    def forward(self, img_padded: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) with H, W multiples of the downscale -> (B, N, embed_dim)."""
        cfg = self.cfg
        grid_h, grid_w = img_padded.shape[2] // cfg.downscale, img_padded.shape[3] // cfg.downscale
        if cfg.prior_mode == PriorMode.NONE:
            return img_padded.new_zeros(img_padded.shape[0], grid_h * grid_w, cfg.embed_dim)

        with torch.no_grad():
            tokens = prior_tokens(img_padded, cfg)
        queries = self.mlp(tokens)
        if self.pos is not None:
            pos = F.interpolate(self.pos, size=(grid_h, grid_w), mode="bilinear", align_corners=False)
            queries = queries + rearrange(pos, "b c h w -> b (h w) c")
        return queries


def compute_prior_queries(
    img: torch.Tensor,
    cfg: ModelConfig,
    embedding: Optional[PriorQueryEmbedding] = None,
) -> torch.Tensor:
    """Query tokens (B, N, embed_dim) for an image batch; builds a fresh embedding when none is given."""
    embedding = embedding if embedding is not None else PriorQueryEmbedding(cfg)
    return embedding(pad_to_multiple(img, cfg.downscale))


def _blocks(count: int, make) -> nn.Module:
    return nn.Sequential(*[make() for _ in range(count)]) if count else nn.Identity()


class PriorQueryTransformer(nn.Module):
    """Encoder/decoder dehazing network conditioned on prior queries."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        width = cfg.base_width

        def naf(ch: int):
            return lambda: NAFBlock(NafBlockSpec(ch, cfg.dw_expand, cfg.ffn_expand))

        def decoder_block(ch: int):
            if cfg.block_type == BlockType.RES:
                return lambda: ResBlock(ch)
            if cfg.block_type == BlockType.VIT:
                return lambda: ViTBlock(ch, cfg.heads, cfg.vit_window)
            return naf(ch)

        self.intro = nn.Conv2d(3, width, 3, padding=1)
        self.ending = nn.Conv2d(width, 3, 3, padding=1)

        self.encoders = nn.ModuleList()
        self.downs = nn.ModuleList()
        chan = width
        for count in cfg.blocks_per_scale:
            self.encoders.append(_blocks(count, naf(chan)))
            self.downs.append(nn.Conv2d(chan, 2 * chan, 2, 2))
            chan *= 2

        self.latent = _blocks(cfg.bottleneck_blocks, naf(chan))
        self.prior_embedding = PriorQueryEmbedding(cfg)
        self.cross_attention = PriorCrossAttention(cfg.embed_dim, chan, cfg.heads)

        self.ups = nn.ModuleList()
        self.skip_projections = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for count in reversed(cfg.decoder_blocks_per_scale):
            self.ups.append(nn.Sequential(nn.Conv2d(chan, chan * 2, 1, bias=False), nn.PixelShuffle(2)))
            chan //= 2
            self.skip_projections.append(nn.Conv2d(chan, chan, 1))
            self.decoders.append(_blocks(count, decoder_block(chan)))

        self.last_attention: Optional[torch.Tensor] = None

    def forward(self, inp: torch.Tensor) -> torch.Tensor:
        _, _, height, width = inp.shape
        try:
            x_pad = pad_to_multiple(inp, self.cfg.downscale)
            queries = self.prior_embedding(x_pad)

            x = self.intro(x_pad)
            skips = []
            for encoder, down in zip(self.encoders, self.downs):
                x = encoder(x)
                skips.append(x)
                x = down(x)

            x = self.latent(x)
            grid_h, grid_w = x.shape[2:]
            tokens = rearrange(x, "b c h w -> b (h w) c")
            attended, weights = self.cross_attention(queries, tokens)
            self.last_attention = weights.detach()
            x = rearrange(tokens + attended, "b (h w) c -> b c h w", h=grid_h, w=grid_w)

            for up, project, decoder, skip in zip(self.ups, self.skip_projections, self.decoders, reversed(skips)):
                x = up(x)
                x = decoder(x + project(skip))

            out = (self.ending(x) + x_pad)[:, :, :height, :width]
        except RuntimeError as e:
            if "out of memory" in str(e).lower():
                raise ResourceLimitError(f"forward pass on {tuple(inp.shape)} ran out of memory") from e
            raise
        return out if self.training else out.clamp(0.0, 1.0)


def build_model(cfg: ModelConfig, seed: Optional[int] = None) -> PriorQueryTransformer:
    """Construct a model; with a seed the initial parameters are reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    model = PriorQueryTransformer(cfg)
    logger.debug(f"Built model with {count_parameters(model)} parameters: {cfg.to_dict()}")
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_hash(model: nn.Module) -> str:
    """sha256 over every state-dict tensor in name order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
