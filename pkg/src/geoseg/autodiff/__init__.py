"""Tensor engine with reverse-mode automatic differentiation."""

from .gradcheck import grad_check, grad_check_seeds  # noqa: F401
from .kernels import (  # noqa: F401
    add,
    as_tensor,
    bilinear_upsample2x,
    broadcast_to,
    concat,
    conv2d,
    cross_entropy,
    deconv2d,
    gelu,
    interpolation_matrix,
    l2_normalize,
    layernorm,
    linear,
    matmul,
    maxpool2d,
    mean,
    mul,
    pointwise,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_all,
    transpose,
)
from .tensor import Tape, Tensor, backward, is_grad_enabled, no_grad  # noqa: F401
