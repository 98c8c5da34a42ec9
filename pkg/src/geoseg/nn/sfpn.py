"""
Simple feature pyramid

One backbone map at stride 16 is resized independently to every pyramid
stride: transposed convolutions when going finer, max pooling when going
coarser, then a 1x1 and a 3x3 convolution each followed by a channel
LayerNorm. There is no top-down pathway.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

from ..autodiff import Tensor, conv2d, deconv2d, gelu, layernorm, maxpool2d
from ..errors import ConfigError, ShapeError
from ..models import PYRAMID_SCALES
from .params import ParamView

logger = logging.getLogger(__name__)

BACKBONE_STRIDE = 16


@dataclass
class PyramidSet:
    """Pyramid levels keyed by stride"""

    levels: Dict[int, Tensor]

    def __getitem__(self, stride: int) -> Tensor:
        return self.levels[stride]

    @property
    def strides(self) -> List[int]:
        return sorted(self.levels, reverse=True)

    def channels(self) -> Dict[int, int]:
        return {s: t.shape[0] for s, t in self.levels.items()}


def _log2(value: int) -> int:
    if value < 1 or value & (value - 1):
        raise ConfigError(f"pyramid stride {value} is not a power of two")
    return value.bit_length() - 1


def num_resizes(s_f: int, s_d: int) -> int:
    """Positive: number of 2x upsamplings; negative: number of 2x poolings."""
    return _log2(s_f) - _log2(s_d)


def deconv_widths(c_in: int, n_up: int, c_d: int) -> List[int]:
    """Channel width after each deconv: halve, but never below C_d (or above the input)."""
    widths = []
    c = c_in
    for _ in range(n_up):
        c = max(c // 2, min(c, c_d))
        widths.append(c)
    return widths


def init_sfpn_level(params: ParamView, c_in: int, s_f: int, s_d: int, c_d: int) -> None:
    n = num_resizes(s_f, s_d)
    c = c_in
    if n > 0:
        for i, width in enumerate(deconv_widths(c_in, n, c_d)):
            if i > 0:
                params.create(f"norm{i}.weight", (c,), "ones")
                params.create(f"norm{i}.bias", (c,), "zeros")
            params.create(f"deconv{i}.weight", (c, width, 2, 2), "trunc_normal", std=0.02)
            params.create(f"deconv{i}.bias", (width,), "zeros")
            c = width
    params.create("conv1x1.weight", (c_d, c, 1, 1), "trunc_normal", std=0.02)
    params.create("conv1x1.bias", (c_d,), "zeros")
    params.create("norm_1x1.weight", (c_d,), "ones")
    params.create("norm_1x1.bias", (c_d,), "zeros")
    params.create("conv3x3.weight", (c_d, c_d, 3, 3), "trunc_normal", std=0.02)
    params.create("conv3x3.bias", (c_d,), "zeros")
    params.create("norm_3x3.weight", (c_d,), "ones")
    params.create("norm_3x3.bias", (c_d,), "zeros")


def sfpn_level(
    feature: Tensor,
    s_f: int,
    s_d: int,
    c_d: int,
    params: ParamView,
    trace: Optional[List[str]] = None,
) -> Tensor:
    """Resize ``feature`` from stride ``s_f`` to ``s_d`` and project to ``c_d`` channels."""
    if feature.ndim != 3:
        raise ShapeError("sfpn_level expects a C x H x W feature map", feature.shape)
    n = num_resizes(s_f, s_d)
    x = feature
    for i in range(abs(n)):
        if n < 0:
            x = maxpool2d(x)
            op = "maxpool"
        else:
            if i > 0:
                x = gelu(layernorm(x, params[f"norm{i}.weight"], params[f"norm{i}.bias"], axis=0))
                if trace is not None:
                    trace.append("gelu_layernorm")
            x = deconv2d(x, params[f"deconv{i}.weight"], params[f"deconv{i}.bias"])
            op = "deconv"
        if trace is not None:
            trace.append(op)
    x = conv2d(x, params["conv1x1.weight"], params["conv1x1.bias"])
    x = layernorm(x, params["norm_1x1.weight"], params["norm_1x1.bias"], axis=0)
    x = conv2d(x, params["conv3x3.weight"], params["conv3x3.bias"])
    x = layernorm(x, params["norm_3x3.weight"], params["norm_3x3.bias"], axis=0)
    if x.shape[0] != c_d:
        raise ShapeError(f"pyramid level at stride {s_d} does not have {c_d} channels", x.shape)
    return x


def init_pyramid(
    params: ParamView,
    c_in: int,
    c_d: int = 256,
    scales: Iterable[int] = PYRAMID_SCALES,
    s_f: int = BACKBONE_STRIDE,
) -> None:
    for s_d in scales:
        init_sfpn_level(params.child(f"p{s_d}"), c_in, s_f, s_d, c_d)


def build_pyramid(
    feature: Tensor,
    params: ParamView,
    c_d: int = 256,
    scales: Iterable[int] = PYRAMID_SCALES,
    s_f: int = BACKBONE_STRIDE,
    trace: Optional[Dict[int, List[str]]] = None,
) -> PyramidSet:
    """Run one independently parameterized level per stride."""
    levels = {}
    for s_d in scales:
        level_trace: Optional[List[str]] = None
        if trace is not None:
            level_trace = trace.setdefault(s_d, [])
        levels[s_d] = sfpn_level(feature, s_f, s_d, c_d, params.child(f"p{s_d}"), level_trace)
    logger.debug("Pyramid built: %s", {s: t.shape for s, t in levels.items()})
    return PyramidSet(levels)
