"""
Finite-difference gradient suite
================================

Every differentiable kernel and every composite layer of the model, checked
against central differences in float64 on small random inputs.

Composite cases draw their parameters at unit-ish scale so no gradient
element is vanishingly small relative to rounding noise, and leave out the
key-projection bias, whose gradient is identically zero (softmax is
invariant to shifting all keys equally).

.. autosummary::
    ~CASES
    ~SAMPLED
    ~run_suite
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check_seeds
from .models import STRATEGIES, FusionConfig, GeoCoord, LocEncoderConfig, ViTConfig
from .nn import fusion, head, locenc, sfpn, vit
from .nn.params import ParamStore, ParamView
from .nn.sfpn import PyramidSet

logger = logging.getLogger(__name__)

Build = Callable[[np.random.Generator], Tuple[Callable[..., Tensor], List[np.ndarray]]]

SUITE_SEEDS = (0, 1, 2, 3, 4)
TOLERANCE = 1e-4


def _away_from_zero(x: np.ndarray, margin: float = 0.1) -> np.ndarray:
    return x + margin * np.sign(x)


def _unary(fn: Callable[[Tensor], Tensor], shape: Sequence[int] = (3, 4)) -> Build:
    def build(rng: np.random.Generator):
        return fn, [rng.standard_normal(shape)]

    return build


def _relu(rng: np.random.Generator):
    return ad.relu, [_away_from_zero(rng.standard_normal((3, 4)))]


def _add(rng: np.random.Generator):
    return ad.add, [rng.standard_normal((3, 4)), rng.standard_normal(4)]


def _matmul(rng: np.random.Generator):
    return ad.matmul, [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))]


def _layernorm(rng: np.random.Generator):
    return ad.layernorm, [
        rng.standard_normal((3, 4)),
        1.0 + 0.1 * rng.standard_normal(4),
        rng.standard_normal(4),
    ]


def _conv(k: int) -> Build:
    def build(rng: np.random.Generator):
        return ad.conv2d, [
            rng.standard_normal((2, 4, 4)),
            rng.standard_normal((3, 2, k, k)),
            rng.standard_normal(3),
        ]

    return build


def _deconv(rng: np.random.Generator):
    return ad.deconv2d, [
        rng.standard_normal((2, 3, 3)),
        rng.standard_normal((2, 3, 2, 2)),
        rng.standard_normal(3),
    ]


def _concat(rng: np.random.Generator):
    return (lambda a, b: ad.concat([a, b], axis=1)), [
        rng.standard_normal((2, 3)),
        rng.standard_normal((2, 2)),
    ]


def _cross_entropy(ignore_one: bool) -> Build:
    def build(rng: np.random.Generator):
        target = rng.integers(0, 3, size=(2, 2))
        if ignore_one:
            target[0, 0] = 255
        return (lambda logits: head.seg_loss(logits, target)), [rng.standard_normal((3, 2, 2))]

    return build


# ---------------------------------------------------------------------------
# composites


def _randomized(store: ParamStore, rng: np.random.Generator, scale: float = 0.5) -> Dict[str, np.ndarray]:
    """Unit-scale replacement values for every parameter of ``store``."""
    values = {}
    for name, tensor in store.items():
        noise = rng.standard_normal(tensor.shape)
        parts = name.split(".")
        if len(parts) > 1 and parts[-2].startswith("norm") and parts[-1] == "weight":
            values[name] = 1.0 + 0.1 * noise
        else:
            values[name] = scale * noise
    return values


def _bound(
    layer: Callable[..., Tensor],
    names: List[str],
    n_inputs: int,
) -> Callable[..., Tensor]:
    """Wrap ``layer(*inputs, params)`` so trailing arguments become named parameters."""

    def kernel(*tensors: Tensor) -> Tensor:
        store = ParamStore(dtype=np.float64)
        for name, tensor in zip(names, tensors[n_inputs:]):
            store.bind(name, tensor)
        return layer(*tensors[:n_inputs], store.view())

    return kernel


def _composite(
    init: Callable[[ParamView], None],
    layer: Callable[..., Tensor],
    inputs: Callable[[np.random.Generator], List[np.ndarray]],
    skip: Sequence[str] = (),
) -> Build:
    def build(rng: np.random.Generator):
        store = ParamStore(dtype=np.float64)
        init(store.view())
        values = _randomized(store, rng)
        names = [n for n in values if n not in skip]
        fixed = {n: v for n, v in values.items() if n in skip}

        def with_fixed(*args: Tensor) -> Tensor:
            *xs, params = args
            for name, value in fixed.items():
                params.store.bind(name, Tensor(value))
            return layer(*xs, params)

        data = inputs(rng)
        kernel = _bound(with_fixed, names, len(data))
        return kernel, data + [values[n] for n in names]

    return build


_VIT = ViTConfig(img_size=64, embed_dim=4, depth=2, n_heads=2, window_size=2, subset_size=2)
_KEY_BIAS = ("attn.k.bias",)


def _attention(mode: str) -> Build:
    return _composite(
        lambda p: vit.init_block(p, _VIT),
        lambda x, params: vit.attention_block(x, mode, params, _VIT),
        lambda rng: [rng.standard_normal((_VIT.n_patches, _VIT.embed_dim))],
        skip=_KEY_BIAS,
    )


def _sfpn(s_d: int, size: int) -> Build:
    return _composite(
        lambda p: sfpn.init_sfpn_level(p, 3, 16, s_d, 4),
        lambda f, params: sfpn.sfpn_level(f, 16, s_d, 4, params),
        lambda rng: [rng.standard_normal((3, size, size))],
    )


def _init_upsample(params: ParamView) -> None:
    params.create("conv.weight", (3, 4, 3, 3))
    params.create("conv.bias", (3,))


_UPSAMPLE = _composite(
    _init_upsample,
    head.upsample_block,
    lambda rng: [rng.standard_normal((2, 2, 2)), rng.standard_normal((2, 4, 4))],
)


def _fusion(strategy: str) -> Build:
    config = FusionConfig(strategy=strategy, placement="post", granularity="L10", n_tokens=2, d_attn=2)
    channels, size = 4, 2
    d_loc = channels if strategy in ("add", "norm_add") else 3

    return _composite(
        lambda p: fusion.init_fusion_site(p, config, channels, size, size, d_loc),
        lambda f, loc, params: fusion.fuse(f, loc, config, params),
        lambda rng: [rng.standard_normal((channels, size, size)), rng.standard_normal(d_loc)],
    )


def _located_fusion(strategy: str) -> Build:
    """Encoder parameters -> embedding -> fusion, so gradients reach both sides."""
    config = FusionConfig(strategy=strategy, placement="post", granularity="L10", n_tokens=2, d_attn=2)
    channels, size = 4, 2
    encoder = LocEncoderConfig(
        degree=3, embed_dim=channels if strategy in ("add", "norm_add") else 3, hidden=(4, 4)
    )

    def init(params: ParamView) -> None:
        locenc.init_loc_encoder(params.child("loc"), encoder)
        fusion.init_fusion_site(params.child("site"), config, channels, size, size, encoder.embed_dim)

    def build(rng: np.random.Generator):
        coord = GeoCoord(lon=float(rng.uniform(-180.0, 180.0)), lat=float(rng.uniform(-80.0, 80.0)))

        def layer(f: Tensor, params: ParamView) -> Tensor:
            embedding = locenc.encode_location(coord, encoder, params.child("loc"))
            return fusion.fuse(f, embedding, config, params.child("site"))

        return _composite(init, layer, lambda r: [r.standard_normal((channels, size, size))])(rng)

    return build


_BACKBONE = ViTConfig(img_size=32, embed_dim=16, depth=2, n_heads=2, window_size=2, subset_size=2)

_BACKBONE_FORWARD = _composite(
    lambda p: vit.init_backbone(p, _BACKBONE),
    lambda image, params: vit.backbone_forward(image, _BACKBONE, params),
    lambda rng: [rng.standard_normal((3, _BACKBONE.img_size, _BACKBONE.img_size))],
    skip=tuple(f"blocks.{i}.{name}" for i in range(_BACKBONE.depth) for name in _KEY_BIAS),
)


def _pyramid_sum(feature: Tensor, params: ParamView) -> Tensor:
    pyramid = sfpn.build_pyramid(feature, params, c_d=3)
    flat = [pyramid[s].reshape(pyramid[s].size) for s in pyramid.strides]
    return ad.sum_all(ad.concat(flat, axis=0))


_PYRAMID = _composite(
    lambda p: sfpn.init_pyramid(p, 3, c_d=3),
    _pyramid_sum,
    lambda rng: [rng.standard_normal((3, 2, 2))],
)

_HEAD_LEVELS = {16: 2, 8: 2, 4: 2, 2: 2}
_HEAD_SIZE = 32


def _unet_head(rng: np.random.Generator):
    store = ParamStore(dtype=np.float64)
    head.init_unet_head(store.view(), _HEAD_LEVELS, 3, widths=(2, 2, 2, 2))
    names = list(store)
    strides = sorted(_HEAD_LEVELS, reverse=True)

    def layer(*args: Tensor) -> Tensor:
        *levels, params = args
        return head.unet_head(PyramidSet(dict(zip(strides, levels))), 3, params)

    # positive levels and parameters keep every ReLU on its active side
    levels = [
        0.1 + np.abs(rng.standard_normal((_HEAD_LEVELS[s], _HEAD_SIZE // s, _HEAD_SIZE // s)))
        for s in strides
    ]
    values = [0.1 + 0.5 * np.abs(rng.standard_normal(store[n].shape)) for n in names]
    return _bound(layer, names, len(levels)), levels + values


CASES: Dict[str, Build] = {
    "relu": _relu,
    "gelu": _unary(ad.gelu),
    "sigmoid": _unary(ad.sigmoid),
    "add": _add,
    "scale": _unary(lambda x: ad.scale(x, 2.5)),
    "softmax": _unary(lambda x: ad.softmax(x, axis=-1)),
    "l2_normalize": _unary(lambda x: ad.l2_normalize(x, axis=0)),
    "mean": _unary(lambda x: ad.mean(x, axis=0)),
    "matmul": _matmul,
    "layernorm": _layernorm,
    "conv2d_1x1": _conv(1),
    "conv2d_3x3": _conv(3),
    "deconv2d": _deconv,
    "maxpool2d": _unary(ad.maxpool2d, (2, 4, 4)),
    "bilinear_upsample2x": _unary(ad.bilinear_upsample2x, (2, 3, 3)),
    "concat": _concat,
    "cross_entropy": _cross_entropy(ignore_one=False),
    "seg_loss": _cross_entropy(ignore_one=True),
    "attention_block.window": _attention("window"),
    "attention_block.global": _attention("global"),
    "sfpn_level.up": _sfpn(4, 2),
    "sfpn_level.down": _sfpn(32, 4),
    "upsample_block": _UPSAMPLE,
    **{f"fusion.{s}": _fusion(s) for s in STRATEGIES},
    **{f"locenc_fusion.{s}": _located_fusion(s) for s in STRATEGIES},
    "backbone_forward": _BACKBONE_FORWARD,
    "build_pyramid": _PYRAMID,
    "unet_head": _unet_head,
}

# cases with thousands of parameters check a seeded sample of each input
SAMPLED: Dict[str, int] = {"backbone_forward": 12, "build_pyramid": 24, "unet_head": 24}


def run_suite(
    names: Optional[Sequence[str]] = None, seeds: Sequence[int] = SUITE_SEEDS
) -> Dict[str, float]:
    """Worst relative error per case over ``seeds``."""
    selected = list(CASES) if names is None else list(names)
    unknown = sorted(set(selected) - set(CASES))
    if unknown:
        raise KeyError(f"unknown gradient case(s): {', '.join(unknown)}")
    results = {}
    for name in selected:
        results[name] = grad_check_seeds(CASES[name], seeds, max_elements=SAMPLED.get(name))
        logger.info("grad-check %-30s max rel err %.3e", name, results[name])
    return results
