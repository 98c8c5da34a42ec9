"""
Location fusion
===============

Merge an image feature map F (C x H x W) with a location embedding L
(d_loc) into a combined map. Normalized variants normalize per spatial
position across channels.

.. autosummary::
    ~tile_location
    ~fuse_elementwise
    ~fuse_projection
    ~fuse_cross_attention
    ~fuse
    ~apply_placement
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

from ..autodiff import (
    Tensor,
    add,
    broadcast_to,
    concat,
    l2_normalize,
    matmul,
    scale,
    softmax,
)
from ..errors import ConfigError, ShapeError
from ..models import POST_ONLY_STRATEGIES, PYRAMID_SCALES, FusionConfig
from .locenc import LocationEmbedding
from .params import ParamView

logger = logging.getLogger(__name__)

ELEMENTWISE_STRATEGIES = ("add", "norm_add", "concat", "norm_concat", "concat_norm")
PROJECTION_STRATEGIES = ("proj_add", "proj_concat")

EmbeddingLike = Union[LocationEmbedding, Tensor]


def _values(embedding: EmbeddingLike) -> Tensor:
    values = embedding.values if isinstance(embedding, LocationEmbedding) else embedding
    if values.ndim != 1:
        raise ShapeError("location embedding must be a vector", values.shape)
    return values


def tile_location(embedding: EmbeddingLike, height: int, width: int) -> Tensor:
    """Copy the embedding to every position of a d_loc x H x W map."""
    if height < 1 or width < 1:
        raise ShapeError("tile extents must be positive", (height, width))
    values = _values(embedding)
    d = values.shape[0]
    return broadcast_to(values.reshape(d, 1, 1), (d, height, width))


def fuse_elementwise(feature: Tensor, embedding: EmbeddingLike, strategy: str) -> Tensor:
    if strategy not in ELEMENTWISE_STRATEGIES:
        raise ValueError(f"'{strategy}' is not an elementwise fusion strategy")
    if feature.ndim != 3:
        raise ShapeError("fusion expects a C x H x W feature map", feature.shape)
    _, h, w = feature.shape
    loc = tile_location(embedding, h, w)
    if strategy in ("add", "norm_add") and loc.shape[0] != feature.shape[0]:
        raise ShapeError(
            f"'{strategy}' needs the embedding width to equal the feature channels",
            feature.shape,
            loc.shape,
        )
    if strategy == "add":
        return add(feature, loc)
    if strategy == "norm_add":
        return add(l2_normalize(feature, axis=0), l2_normalize(loc, axis=0))
    if strategy == "concat":
        return concat([feature, loc], axis=0)
    if strategy == "norm_concat":
        return concat([l2_normalize(feature, axis=0), l2_normalize(loc, axis=0)], axis=0)
    return l2_normalize(concat([feature, loc], axis=0), axis=0)


def init_projection(params: ParamView, height: int, width: int, d_loc: int) -> None:
    params.create("w_l", (height * width, d_loc), "trunc_normal", std=0.02)


def fuse_projection(
    feature: Tensor, embedding: EmbeddingLike, params: ParamView, mode: str
) -> Tensor:
    """Project L to a single H x W raster, then add it to every channel or append it."""
    if mode not in PROJECTION_STRATEGIES:
        raise ValueError(f"'{mode}' is not a projection fusion strategy")
    if feature.ndim != 3:
        raise ShapeError("fusion expects a C x H x W feature map", feature.shape)
    values = _values(embedding)
    _, h, w = feature.shape
    w_l = params["w_l"]
    if w_l.shape != (h * w, values.shape[0]):
        raise ShapeError(f"w_l does not map the embedding onto a {h}x{w} raster", w_l.shape)
    raster = matmul(w_l, values.reshape(values.shape[0], 1)).reshape(1, h, w)
    if mode == "proj_add":
        return add(feature, raster)
    return concat([feature, raster], axis=0)


def init_cross_attention(
    params: ParamView, channels: int, d_loc: int, n_tokens: int, d_attn: int
) -> None:
    token_dim = d_loc
    if n_tokens > 1:
        params.create("w_tok", (d_loc, n_tokens * d_attn), "trunc_normal", std=0.02)
        token_dim = d_attn
    params.create("w_q", (channels, d_attn), "trunc_normal", std=0.02)
    params.create("w_k", (token_dim, d_attn), "trunc_normal", std=0.02)
    params.create("w_v", (token_dim, channels), "trunc_normal", std=0.02)


def fuse_cross_attention(
    feature: Tensor,
    embedding: EmbeddingLike,
    params: ParamView,
    n_tokens: int = 8,
    residual: bool = False,
    return_attention: bool = False,
):
    """Pixels query location tokens: C = softmax(Q K^T / sqrt(d_attn)) V.

    With one token the embedding itself is the only key, so every position
    receives the same value vector.
    """
    if feature.ndim != 3:
        raise ShapeError("fusion expects a C x H x W feature map", feature.shape)
    if n_tokens < 1:
        raise ConfigError("n_tokens must be at least 1")
    values = _values(embedding)
    c, h, w = feature.shape
    d_loc = values.shape[0]
    w_q, w_k, w_v = params["w_q"], params["w_k"], params["w_v"]
    d_attn = w_q.shape[1]
    if w_k.shape[1] != d_attn:
        raise ShapeError("query and key projections disagree on d_attn", w_q.shape, w_k.shape)
    if w_q.shape[0] != c or w_v.shape[1] != c:
        raise ShapeError("attention projections do not match feature channels", w_q.shape, w_v.shape)

    if n_tokens == 1:
        tokens = values.reshape(1, d_loc)
    else:
        w_tok = params["w_tok"]
        if w_tok.shape[1] % n_tokens:
            raise ShapeError(f"w_tok cannot be split into {n_tokens} tokens", w_tok.shape)
        tokens = matmul(values.reshape(1, d_loc), w_tok).reshape(n_tokens, w_tok.shape[1] // n_tokens)
    if tokens.shape[1] != w_k.shape[0]:
        raise ShapeError("location tokens do not match the key projection", tokens.shape, w_k.shape)

    queries = matmul(feature.reshape(c, h * w).transpose(), w_q)
    keys = matmul(tokens, w_k)
    vals = matmul(tokens, w_v)
    attention = softmax(scale(matmul(queries, keys.transpose()), 1.0 / math.sqrt(d_attn)), axis=-1)
    out = matmul(attention, vals).transpose().reshape(c, h, w)
    if residual:
        out = add(feature, out)
    if return_attention:
        return out, attention
    return out


def fused_channels(strategy: str, channels: int, d_loc: int) -> int:
    """Channel count after fusing a ``channels``-wide map with a d_loc embedding."""
    if strategy in ("concat", "norm_concat", "concat_norm"):
        return channels + d_loc
    if strategy == "proj_concat":
        return channels + 1
    return channels


def init_fusion_site(
    params: ParamView, fusion: FusionConfig, channels: int, height: int, width: int, d_loc: int
) -> None:
    if fusion.strategy in PROJECTION_STRATEGIES:
        init_projection(params, height, width, d_loc)
    elif fusion.strategy == "cross_attention":
        init_cross_attention(params, channels, d_loc, fusion.n_tokens, fusion.d_attn)


def fuse(
    feature: Tensor, embedding: EmbeddingLike, fusion: FusionConfig, params: ParamView
) -> Tensor:
    if fusion.strategy in ELEMENTWISE_STRATEGIES:
        return fuse_elementwise(feature, embedding, fusion.strategy)
    if fusion.strategy in PROJECTION_STRATEGIES:
        return fuse_projection(feature, embedding, params, fusion.strategy)
    return fuse_cross_attention(
        feature, embedding, params, n_tokens=fusion.n_tokens, residual=fusion.residual
    )


@dataclass(frozen=True)
class FusionSite:
    """Where a fusion runs and the shape of the map it receives"""

    name: str
    channels: int
    height: int
    width: int


@dataclass(frozen=True)
class PipelinePlan:
    """Channel bookkeeping from backbone to head for one model configuration"""

    img_size: int
    backbone_channels: int
    pyramid_channels: int
    d_loc: int
    sfpn_in_channels: int
    level_channels: Dict[int, int]
    fusion: Optional[FusionConfig] = None
    sites: Tuple[FusionSite, ...] = field(default_factory=tuple)

    @classmethod
    def baseline(
        cls, img_size: int, backbone_channels: int, pyramid_channels: int, d_loc: int = 0
    ) -> "PipelinePlan":
        return cls(
            img_size=img_size,
            backbone_channels=backbone_channels,
            pyramid_channels=pyramid_channels,
            d_loc=d_loc or pyramid_channels,
            sfpn_in_channels=backbone_channels,
            level_channels={s: pyramid_channels for s in PYRAMID_SCALES},
        )


def apply_placement(plan: PipelinePlan, fusion: FusionConfig) -> PipelinePlan:
    """Insert ``fusion`` before the pyramid (once, on F) or after it (once per level)."""
    if fusion.placement == "pre" and fusion.strategy in POST_ONLY_STRATEGIES:
        raise ConfigError(f"strategy '{fusion.strategy}' is only valid post pyramid")
    if plan.fusion is not None:
        raise ConfigError("pipeline already has a fusion stage")
    if fusion.placement == "pre":
        grid = plan.img_size // 16
        site = FusionSite("pre", plan.backbone_channels, grid, grid)
        return replace(
            plan,
            fusion=fusion,
            sites=(site,),
            sfpn_in_channels=fused_channels(fusion.strategy, plan.backbone_channels, plan.d_loc),
        )
    if fusion.strategy in POST_ONLY_STRATEGIES and plan.d_loc != plan.pyramid_channels:
        raise ConfigError(
            f"'{fusion.strategy}' needs embedding width {plan.d_loc} "
            f"to equal pyramid channels {plan.pyramid_channels}"
        )
    sites = []
    levels = {}
    for s_d, channels in plan.level_channels.items():
        extent = plan.img_size // s_d
        sites.append(FusionSite(f"post.p{s_d}", channels, extent, extent))
        levels[s_d] = fused_channels(fusion.strategy, channels, plan.d_loc)
    return replace(plan, fusion=fusion, sites=tuple(sites), level_channels=levels)
