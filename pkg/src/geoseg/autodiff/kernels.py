"""
Differentiable kernels
======================

Every kernel takes and returns :class:`~geoseg.autodiff.tensor.Tensor` values,
checks that its result is finite and, when gradients are enabled and an input
requires them, records its backward rule.

.. autosummary::
    ~pointwise
    ~softmax
    ~l2_normalize
    ~matmul
    ~conv2d
    ~deconv2d
    ~maxpool2d
    ~layernorm
    ~bilinear_upsample2x
    ~concat
    ~cross_entropy
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf, expit

from ..errors import DatasetError, NonFiniteError, ShapeError
from .tensor import BackwardFn, Node, Tensor, is_grad_enabled

logger = logging.getLogger(__name__)

LAYERNORM_EPS = 1e-6
L2_EPS = 1e-12
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

ArrayLike = Union[Tensor, np.ndarray, float, int, Sequence[float]]


def as_tensor(value: ArrayLike, dtype: Optional[np.dtype] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _make(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    record = is_grad_enabled() and any(t.requires_grad for t in inputs)
    node = Node(op, tuple(inputs), backward_fn) if record else None
    array = np.asarray(data)
    if not array.flags.c_contiguous:
        array = array.copy(order="C")
    return Tensor._wrap(array, record, node)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes that broadcasting expanded from ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


# ---------------------------------------------------------------------------
# pointwise


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make("relu", np.where(mask, x.data, 0).astype(x.dtype), [x], lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact GeLU, x * Phi(x)"""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
    deriv = cdf + x.data * pdf
    return _make("gelu", (x.data * cdf).astype(x.dtype), [x], lambda g: (g * deriv,))


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data).astype(x.dtype)
    return _make("sigmoid", y, [x], lambda g: (g * y * (1.0 - y),))


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise ShapeError(f"{op}: shapes are not broadcast-compatible", a.shape, b.shape) from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    return _make(
        "add",
        a.data + b.data,
        [a, b],
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)
    return _make(
        "sub",
        a.data - b.data,
        [a, b],
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    return _make(
        "mul",
        a.data * b.data,
        [a, b],
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _make("scale", x.data * factor, [x], lambda g: (g * factor,))


def pointwise(op_id: str, *inputs: Tensor, value: Optional[float] = None) -> Tensor:
    """Dispatch one of relu, gelu, sigmoid, add, scale."""
    if op_id in ("relu", "gelu", "sigmoid"):
        if len(inputs) != 1:
            raise ShapeError(f"{op_id} takes exactly one input")
        return {"relu": relu, "gelu": gelu, "sigmoid": sigmoid}[op_id](inputs[0])
    if op_id == "add":
        if len(inputs) != 2:
            raise ShapeError("add takes exactly two inputs")
        return add(inputs[0], inputs[1])
    if op_id == "scale":
        if len(inputs) != 1 or value is None:
            raise ShapeError("scale takes one input and a scalar value")
        return scale(inputs[0], value)
    raise ValueError(f"unknown pointwise op '{op_id}'")


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape to {tuple(shape)}", x.shape) from None
    return _make("reshape", data, [x], lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    perm = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(perm))
    return _make("transpose", x.data.transpose(perm), [x], lambda g: (g.transpose(inverse),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError("cannot broadcast", x.shape, shape) from None
    return _make("broadcast_to", data, [x], lambda g: (_unbroadcast(g, x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one operand")
    first = tensors[0]
    axis = _check_axis(axis, first.ndim)
    for index, t in enumerate(tensors[1:], start=1):
        if t.ndim != first.ndim or any(
            t.shape[d] != first.shape[d] for d in range(first.ndim) if d != axis
        ):
            raise ShapeError(f"concat operand {index} does not match operand 0", t.shape, first.shape)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward_fn(g: np.ndarray) -> List[np.ndarray]:
        return [np.ascontiguousarray(part) for part in np.split(g, bounds, axis=axis)]

    return _make("concat", data, list(tensors), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    return _make(
        "sum", np.asarray(x.data.sum(), dtype=x.dtype), [x], lambda g: (np.broadcast_to(g, x.shape).copy(),)
    )


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    if axis is None:
        n = x.size
        data = np.asarray(x.data.mean(), dtype=x.dtype)
        return _make("mean", data, [x], lambda g: (np.broadcast_to(g / n, x.shape).copy(),))
    axis = _check_axis(axis, x.ndim)
    n = x.shape[axis]
    data = x.data.mean(axis=axis)
    return _make(
        "mean",
        data,
        [x],
        lambda g: (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),),
    )


# ---------------------------------------------------------------------------
# normalizations and softmax


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make("softmax", y, [x], backward_fn)


def l2_normalize(x: Tensor, axis: int = 0) -> Tensor:
    """x / (|x| + 1e-12) along ``axis``; zero vectors stay zero and pass no gradient."""
    axis = _check_axis(axis, x.ndim)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    denom = norm + L2_EPS
    zero = norm == 0
    if np.any(zero):
        logger.debug("l2_normalize: %d zero vector(s) mapped to zero", int(zero.sum()))
    y = x.data / denom
    safe_norm = np.where(zero, 1.0, norm)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        radial = (g * x.data).sum(axis=axis, keepdims=True)
        coeff = np.where(zero, 0.0, radial / (denom * denom * safe_norm))
        return (np.where(zero, 0.0, g / denom - x.data * coeff),)

    return _make("l2_normalize", y, [x], backward_fn)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int = -1) -> Tensor:
    """Normalize along ``axis`` to zero mean / unit (population) variance, then affine."""
    axis = _check_axis(axis, x.ndim)
    n = x.shape[axis]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(f"layernorm affine parameters must have shape ({n},)", gamma.shape, beta.shape)
    xm = np.moveaxis(x.data, axis, -1)
    mu = xm.mean(axis=-1, keepdims=True)
    centered = xm - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    xhat = centered * inv
    y = np.moveaxis(xhat * gamma.data + beta.data, -1, axis)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        gm = np.moveaxis(g, axis, -1)
        reduce_axes = tuple(range(gm.ndim - 1))
        dgamma = (gm * xhat).sum(axis=reduce_axes)
        dbeta = gm.sum(axis=reduce_axes)
        dxhat = gm * gamma.data
        dx = (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return (np.moveaxis(dx, -1, axis), dgamma, dbeta)

    return _make("layernorm", y, [x, gamma, beta], backward_fn)


# ---------------------------------------------------------------------------
# linear algebra and convolutions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands of rank >= 2", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul inner dimensions differ", a.shape, b.shape)
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul batch dimensions differ", a.shape, b.shape)
    data = np.matmul(a.data, b.data)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _make("matmul", data, [a, b], backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight + bias with weight stored (in_features, out_features)"""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 'same' convolution of a C_in x H x W map with an odd square kernel."""
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError("conv2d expects C x H x W input and 4-d weight", x.shape, weight.shape)
    c_out, c_in, kh, kw = weight.shape
    if c_in != x.shape[0]:
        raise ShapeError("conv2d channel mismatch", x.shape, weight.shape)
    if kh != kw or kh % 2 == 0:
        raise ShapeError("conv2d kernel must be square and odd", weight.shape)
    if bias.shape != (c_out,):
        raise ShapeError("conv2d bias must have one entry per output channel", bias.shape)
    k = kh
    pad = (k - 1) // 2
    _, h, w = x.shape
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((c_out, h, w), dtype=np.result_type(x.data, weight.data))
    for i in range(k):
        for j in range(k):
            out += np.tensordot(weight.data[:, :, i, j], xp[:, i : i + h, j : j + w], axes=1)
    out += bias.data[:, None, None]

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(weight.data)
        for i in range(k):
            for j in range(k):
                window = xp[:, i : i + h, j : j + w]
                gw[:, :, i, j] = np.tensordot(g, window, axes=([1, 2], [1, 2]))
                gxp[:, i : i + h, j : j + w] += np.tensordot(weight.data[:, :, i, j].T, g, axes=1)
        return (gxp[:, pad : pad + h, pad : pad + w], gw, g.sum(axis=(1, 2)))

    return _make(f"conv2d_{k}x{k}", out, [x, weight, bias], backward_fn)


def deconv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Transposed convolution, kernel 2 stride 2; weight is C_in x C_out x 2 x 2."""
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2:] != (2, 2):
        raise ShapeError("deconv2d expects C x H x W input and C_in x C_out x 2 x 2 weight", x.shape, weight.shape)
    c_in, c_out = weight.shape[:2]
    if c_in != x.shape[0]:
        raise ShapeError("deconv2d channel mismatch", x.shape, weight.shape)
    if bias.shape != (c_out,):
        raise ShapeError("deconv2d bias must have one entry per output channel", bias.shape)
    _, h, w = x.shape
    blocks = np.einsum("chw,coij->ohiwj", x.data, weight.data)
    out = blocks.reshape(c_out, 2 * h, 2 * w) + bias.data[:, None, None]

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        g5 = g.reshape(c_out, h, 2, w, 2)
        gx = np.einsum("ohiwj,coij->chw", g5, weight.data)
        gw = np.einsum("chw,ohiwj->coij", x.data, g5)
        return (gx, gw, g.sum(axis=(1, 2)))

    return _make("deconv2d", out, [x, weight, bias], backward_fn)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; ties route the gradient to the first row-major index."""
    if x.ndim != 3:
        raise ShapeError("maxpool2d expects C x H x W input", x.shape)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError("maxpool2d needs even spatial extents", x.shape)
    blocks = x.data.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        scattered = np.zeros_like(blocks)
        np.put_along_axis(scattered, arg[..., None], g[..., None], axis=-1)
        grad = scattered.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        return (grad,)

    return _make("maxpool2d", out, [x], backward_fn)


def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic linear interpolation matrix (align-corners=false convention)."""
    if n_in < 1 or n_out < 1:
        raise ShapeError("interpolation extents must be positive", (n_in,), (n_out,))
    matrix = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for o in range(n_out):
        src = min(max((o + 0.5) * ratio - 0.5, 0.0), n_in - 1.0)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        matrix[o, i0] += 1.0 - frac
        matrix[o, i1] += frac
    return matrix


def bilinear_upsample2x(x: Tensor) -> Tensor:
    if x.ndim != 3:
        raise ShapeError("bilinear_upsample2x expects C x H x W input", x.shape)
    _, h, w = x.shape
    uh = interpolation_matrix(h, 2 * h).astype(x.dtype)
    uw = interpolation_matrix(w, 2 * w).astype(x.dtype)
    out = np.matmul(np.matmul(uh, x.data), uw.T)
    return _make(
        "bilinear_upsample2x",
        out,
        [x],
        lambda g: (np.matmul(np.matmul(uh.T, g), uw),),
    )


# ---------------------------------------------------------------------------
# loss


def cross_entropy(logits: Tensor, target: np.ndarray, ignore_index: int = 255) -> Tensor:
    """Mean pixelwise cross-entropy of N x H x W logits against an H x W class map."""
    if logits.ndim != 3 or target.shape != logits.shape[1:]:
        raise ShapeError("cross_entropy expects N x H x W logits and H x W target", logits.shape, target.shape)
    n_classes = logits.shape[0]
    target = np.asarray(target, dtype=np.int64)
    valid = target != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise DatasetError("cross_entropy: every pixel is ignored")
    labels = np.where(valid, target, 0)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DatasetError(f"cross_entropy: class id outside [0, {n_classes})")
    shifted = logits.data - logits.data.max(axis=0, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    picked = np.take_along_axis(log_probs, labels[None], axis=0)[0]
    loss = -(picked * valid).sum() / count

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.exp(log_probs)
        np.put_along_axis(grad, labels[None], np.take_along_axis(grad, labels[None], 0) - 1.0, axis=0)
        return ((grad * (valid / count) * g).astype(logits.dtype, copy=False),)

    return _make("cross_entropy", np.asarray(loss, dtype=logits.dtype), [logits], backward_fn)
