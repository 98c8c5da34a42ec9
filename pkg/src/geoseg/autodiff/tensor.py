"""
N-D tensors with reverse-mode gradients

A kernel that receives at least one tensor requiring gradients records a
:class:`Node` on its output. :class:`Tape` collects the nodes reachable from a
scalar loss in execution order and replays them backwards.
"""

import contextlib
import contextvars
import itertools
import logging
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeError

logger = logging.getLogger(__name__)

_grad_enabled: contextvars.ContextVar = contextvars.ContextVar("geoseg_grad_enabled", default=True)
_sequence = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run kernels without recording them for backward."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return bool(_grad_enabled.get())


class Node:
    """One recorded kernel application"""

    __slots__ = ("seq", "op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], backward_fn: BackwardFn):
        self.seq = next(_sequence)
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """Immutable N-D real array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(
        self,
        data: object,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None,
    ):
        if dtype is None:
            is_float = isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating)
            dtype = data.dtype if is_float else np.float64  # type: ignore[union-attr]
        array = np.array(data, dtype=dtype, copy=True)
        array.setflags(write=False)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool, node: Optional[Node]) -> "Tensor":
        out = cls.__new__(cls)
        data.setflags(write=False)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.node = node
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError("item() needs a single-element tensor", self.shape)
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False, None)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # operator sugar; the kernels live in geoseg.autodiff.kernels

    def __add__(self, other: object) -> "Tensor":
        from . import kernels

        return kernels.add(self, kernels.as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other: object) -> "Tensor":
        from . import kernels

        return kernels.sub(self, kernels.as_tensor(other, self.dtype))

    def __neg__(self) -> "Tensor":
        from . import kernels

        return kernels.scale(self, -1.0)

    def __mul__(self, other: object) -> "Tensor":
        from . import kernels

        if isinstance(other, (int, float)):
            return kernels.scale(self, float(other))
        return kernels.mul(self, kernels.as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import kernels

        return kernels.matmul(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        from . import kernels

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return kernels.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from . import kernels

        return kernels.transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return self.transpose()


class Tape:
    """Ordered record of the kernel applications that produced one output."""

    def __init__(self, records: List[Tuple[Node, Tensor]]):
        self.records = records

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        seen: Dict[int, Tuple[Node, Tensor]] = {}
        stack = [output]
        while stack:
            tensor = stack.pop()
            node = tensor.node
            if node is None or id(node) in seen:
                continue
            seen[id(node)] = (node, tensor)
            stack.extend(node.inputs)
        records = sorted(seen.values(), key=lambda rec: rec[0].seq)
        return cls(records)

    def __len__(self) -> int:
        return len(self.records)

    def ops(self) -> List[str]:
        return [node.op for node, _ in self.records]

    def run_backward(self, output: Tensor, seed: np.ndarray) -> None:
        """Propagate ``seed`` (d loss / d output) to every leaf requiring gradients."""
        grads: Dict[int, np.ndarray] = {id(output): seed}
        for node, tensor in reversed(self.records):
            g = grads.pop(id(tensor), None)
            if g is None:
                continue
            input_grads = node.backward_fn(g)
            for inp, gi in zip(node.inputs, input_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise ShapeError(f"gradient shape mismatch in {node.op}", gi.shape, inp.shape)
                if inp.node is None:
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
                else:
                    key = id(inp)
                    grads[key] = gi if key not in grads else grads[key] + gi


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every leaf that ``loss`` depends on; gradients accumulate."""
    if loss.size != 1:
        raise ShapeError("backward() needs a scalar loss", loss.shape)
    seed = np.ones(loss.shape, dtype=loss.dtype)
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    tape = Tape.from_output(loss)
    logger.debug("backward over %d recorded kernels", len(tape))
    tape.run_backward(loss, seed)
