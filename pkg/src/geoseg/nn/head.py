"""
Cascaded-upsampler segmentation head
"""

import logging
from typing import Dict, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor, bilinear_upsample2x, concat, conv2d, cross_entropy, no_grad, relu, softmax
from ..errors import ShapeError
from ..models import IGNORE_INDEX
from .params import ParamView
from .sfpn import PyramidSet

logger = logging.getLogger(__name__)

HEAD_WIDTHS: Tuple[int, ...] = (128, 64, 32, 16)
SKIP_STRIDES: Tuple[int, ...] = (8, 4, 2)
STEM_STRIDE = 16


def _init_conv(params: ParamView, name: str, c_in: int, c_out: int, k: int) -> None:
    params.create(f"{name}.weight", (c_out, c_in, k, k), "he_normal", fan_in=c_in * k * k)
    params.create(f"{name}.bias", (c_out,), "zeros")


def init_unet_head(
    params: ParamView,
    level_channels: Dict[int, int],
    n_classes: int,
    widths: Sequence[int] = HEAD_WIDTHS,
) -> None:
    c = level_channels[STEM_STRIDE]
    for i, stride in enumerate(SKIP_STRIDES):
        _init_conv(params, f"up{i}.conv", c + level_channels[stride], widths[i], 3)
        c = widths[i]
    _init_conv(params, "final.conv", c, widths[len(SKIP_STRIDES)], 3)
    _init_conv(params, "classifier", widths[len(SKIP_STRIDES)], n_classes, 1)


def upsample_block(x: Tensor, skip: Tensor, params: ParamView) -> Tensor:
    """2x bilinear upsample, concatenate the skip, 3x3 conv, ReLU."""
    if x.ndim != 3 or skip.ndim != 3 or skip.shape[1:] != (2 * x.shape[1], 2 * x.shape[2]):
        raise ShapeError("skip connection must be twice the input resolution", x.shape, skip.shape)
    merged = concat([bilinear_upsample2x(x), skip], axis=0)
    return relu(conv2d(merged, params["conv.weight"], params["conv.bias"]))


def unet_head(pyramid: PyramidSet, n_classes: int, params: ParamView) -> Tensor:
    """Pyramid -> N x H x W logits, stem at stride 16 and skips at 8, 4, 2."""
    x = pyramid[STEM_STRIDE]
    for i, stride in enumerate(SKIP_STRIDES):
        x = upsample_block(x, pyramid[stride], params.child(f"up{i}"))
    x = relu(conv2d(bilinear_upsample2x(x), params["final.conv.weight"], params["final.conv.bias"]))
    logits = conv2d(x, params["classifier.weight"], params["classifier.bias"])
    if logits.shape[0] != n_classes:
        raise ShapeError(f"head emits {logits.shape[0]} classes, expected {n_classes}", logits.shape)
    return logits


def predict(logits: Tensor) -> Tuple[np.ndarray, np.ndarray]:
    """Per-pixel class map (lowest index wins ties) and class probabilities."""
    if logits.ndim != 3:
        raise ShapeError("predict expects N x H x W logits", logits.shape)
    with no_grad():
        probs = softmax(logits, axis=0).data
    class_map = np.argmax(logits.data, axis=0).astype(np.int64)
    return class_map, probs


def seg_loss(logits: Tensor, truth: np.ndarray, ignore_index: int = IGNORE_INDEX) -> Tensor:
    return cross_entropy(logits, truth, ignore_index=ignore_index)
