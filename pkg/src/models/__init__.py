"""Prior-query transformer and its building blocks."""

from .attention import PriorCrossAttention, multi_head_attention
from .blocks import LayerNorm2d, NAFBlock, NafBlockSpec, ResBlock, ViTBlock
from .network import (
    BlockType,
    ModelConfig,
    PriorMode,
    PriorQueryEmbedding,
    PriorQueryTransformer,
    build_model,
    compute_prior_queries,
    count_parameters,
    parameter_hash,
    prior_tokens,
)

__all__ = [
    'PriorCrossAttention',
    'multi_head_attention',
    'LayerNorm2d',
    'NAFBlock',
    'NafBlockSpec',
    'ResBlock',
    'ViTBlock',
    'BlockType',
    'ModelConfig',
    'PriorMode',
    'PriorQueryEmbedding',
    'PriorQueryTransformer',
    'build_model',
    'compute_prior_queries',
    'count_parameters',
    'parameter_hash',
    'prior_tokens',
]
