"""
Plain ViT backbone
==================

Patchify, embed, run pre-norm transformer blocks and fold the tokens back
into a spatial feature map. Every ``subset_size``-th block attends globally;
the rest attend within non-overlapping windows of the patch grid.

.. autosummary::
    ~init_backbone
    ~patch_embed
    ~attention_block
    ~backbone_forward
"""

import logging
import math
from typing import List, Optional, Tuple

from ..autodiff import Tensor, add, gelu, layernorm, linear, matmul, scale, softmax
from ..errors import ShapeError
from ..models import ViTConfig
from .params import ParamView

logger = logging.getLogger(__name__)

ATTENTION_MODES = ("window", "global")


def _init_layernorm(params: ParamView, name: str, width: int) -> None:
    params.create(f"{name}.weight", (width,), "ones")
    params.create(f"{name}.bias", (width,), "zeros")


def _init_linear(params: ParamView, name: str, n_in: int, n_out: int) -> None:
    params.create(f"{name}.weight", (n_in, n_out), "trunc_normal", std=0.02)
    params.create(f"{name}.bias", (n_out,), "zeros")


def init_backbone(params: ParamView, config: ViTConfig) -> None:
    """Create every backbone parameter under ``params``."""
    d = config.embed_dim
    patch_dim = 3 * config.patch_size * config.patch_size
    _init_linear(params, "patch_embed.proj", patch_dim, d)
    params.create("patch_embed.pos_embed", (config.n_patches, d), "zeros")
    for i in range(config.depth):
        init_block(params.child(f"blocks.{i}"), config)
    _init_layernorm(params, "norm", d)


def init_block(params: ParamView, config: ViTConfig) -> None:
    d = config.embed_dim
    _init_layernorm(params, "norm1", d)
    for name in ("q", "k", "v", "proj"):
        _init_linear(params, f"attn.{name}", d, d)
    _init_layernorm(params, "norm2", d)
    _init_linear(params, "mlp.fc1", d, config.mlp_hidden)
    _init_linear(params, "mlp.fc2", config.mlp_hidden, d)


def _dense(x: Tensor, params: ParamView, name: str) -> Tensor:
    return linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def patchify(image: Tensor, patch_size: int = 16) -> Tensor:
    """3 x H x W image -> (H/p * W/p) x (3*p*p) rows, patches in row-major grid order."""
    c, h, w = image.shape
    gh, gw = h // patch_size, w // patch_size
    x = image.reshape(c, gh, patch_size, gw, patch_size)
    x = x.transpose(1, 3, 0, 2, 4)
    return x.reshape(gh * gw, c * patch_size * patch_size)


def patch_embed(image: Tensor, config: ViTConfig, params: ParamView) -> Tensor:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError("patch_embed expects a 3 x H x W image", image.shape)
    _, h, w = image.shape
    if h % config.patch_size or w % config.patch_size:
        raise ShapeError(f"image size is not a multiple of {config.patch_size}", image.shape)
    if h != config.img_size or w != config.img_size:
        raise ShapeError(
            f"image does not match img_size {config.img_size}", image.shape
        )
    tokens = _dense(patchify(image, config.patch_size), params, "patch_embed.proj")
    return add(tokens, params["patch_embed.pos_embed"])


def window_partition(tokens: Tensor, grid: int, window: int) -> Tensor:
    """n x d tokens on a grid x grid layout -> (n_windows, window*window, d)"""
    d = tokens.shape[-1]
    nw = grid // window
    x = tokens.reshape(nw, window, nw, window, d).transpose(0, 2, 1, 3, 4)
    return x.reshape(nw * nw, window * window, d)


def window_unpartition(windows: Tensor, grid: int, window: int) -> Tensor:
    d = windows.shape[-1]
    nw = grid // window
    x = windows.reshape(nw, nw, window, window, d).transpose(0, 2, 1, 3, 4)
    return x.reshape(grid * grid, d)


def multi_head_attention(
    x: Tensor, params: ParamView, n_heads: int
) -> Tuple[Tensor, Tensor]:
    """Self-attention over each group of a (groups, T, d) batch.

    Returns the projected output and the attention weights
    (groups, heads, T, T).
    """
    groups, t, d = x.shape
    dh = d // n_heads

    def heads(name: str) -> Tensor:
        return _dense(x, params, name).reshape(groups, t, n_heads, dh).transpose(0, 2, 1, 3)

    q, k, v = heads("attn.q"), heads("attn.k"), heads("attn.v")
    scores = scale(matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / math.sqrt(dh))
    weights = softmax(scores, axis=-1)
    out = matmul(weights, v).transpose(0, 2, 1, 3).reshape(groups, t, d)
    return _dense(out, params, "attn.proj"), weights


def attention_block(
    tokens: Tensor,
    mode: str,
    params: ParamView,
    config: ViTConfig,
    trace: Optional[List[str]] = None,
    return_attention: bool = False,
):
    """Pre-norm transformer block.

    ``mode="global"`` is the windowed path with one window covering the grid,
    so a window equal to the grid reproduces global attention exactly.
    """
    if mode not in ATTENTION_MODES:
        raise ValueError(f"unknown attention mode '{mode}'")
    grid = config.grid_size
    if tokens.ndim != 2 or tokens.shape[0] != grid * grid:
        raise ShapeError(f"attention_block expects {grid * grid} tokens", tokens.shape)
    window = config.window_size if mode == "window" else grid
    if grid % window:
        raise ShapeError(f"patch grid {grid} cannot be split into windows of {window}", tokens.shape)

    h = layernorm(tokens, params["norm1.weight"], params["norm1.bias"])
    attended, weights = multi_head_attention(
        window_partition(h, grid, window), params, config.n_heads
    )
    x = add(tokens, window_unpartition(attended, grid, window))
    h = layernorm(x, params["norm2.weight"], params["norm2.bias"])
    x = add(x, _dense(gelu(_dense(h, params, "mlp.fc1")), params, "mlp.fc2"))
    if trace is not None:
        trace.append(mode)
    if return_attention:
        return x, weights
    return x


def block_modes(config: ViTConfig) -> List[str]:
    global_blocks = set(config.global_block_indices)
    return ["global" if i in global_blocks else "window" for i in range(config.depth)]


def backbone_forward(
    image: Tensor, config: ViTConfig, params: ParamView, trace: Optional[List[str]] = None
) -> Tensor:
    """Image -> feature map F of shape embed_dim x H/16 x W/16."""
    x = patch_embed(image, config, params)
    for i, mode in enumerate(block_modes(config)):
        x = attention_block(x, mode, params.child(f"blocks.{i}"), config, trace)
    x = layernorm(x, params["norm.weight"], params["norm.bias"])
    g = config.grid_size
    return x.reshape(g, g, config.embed_dim).transpose(2, 0, 1)
