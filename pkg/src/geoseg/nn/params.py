"""
Named parameter storage
"""

import logging
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor
from ..errors import ShapeError

logger = logging.getLogger(__name__)

INITIALIZERS = ("zeros", "ones", "trunc_normal", "he_normal", "lecun_normal")


class ParamStore:
    """Ordered, named collection of trainable leaves.

    Tensors are immutable, so updates replace the stored tensor. ``version``
    increments on every update so caches keyed on parameters can be invalidated.
    """

    def __init__(self, seed: int = 0, dtype: np.dtype = np.float32):
        self.dtype = np.dtype(dtype)
        self.version = 0
        self._params: Dict[str, Tensor] = {}
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"no parameter named '{name}'") from None

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def view(self, prefix: str = "") -> "ParamView":
        return ParamView(self, prefix)

    def create(
        self,
        name: str,
        shape: Sequence[int],
        init: str = "zeros",
        std: float = 0.02,
        fan_in: Optional[int] = None,
    ) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter '{name}' already exists")
        shape = tuple(int(s) for s in shape)
        values = self._initial_values(shape, init, std, fan_in)
        tensor = Tensor(values.astype(self.dtype), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def _initial_values(
        self, shape: Tuple[int, ...], init: str, std: float, fan_in: Optional[int]
    ) -> np.ndarray:
        if init == "zeros":
            return np.zeros(shape)
        if init == "ones":
            return np.ones(shape)
        if init == "trunc_normal":
            return std * self._truncated_normal(shape)
        if init in ("he_normal", "lecun_normal"):
            fan = fan_in if fan_in is not None else shape[0]
            gain = 2.0 if init == "he_normal" else 1.0
            return np.sqrt(gain / fan) * self._truncated_normal(shape)
        raise ValueError(f"unknown initializer '{init}'")

    def _truncated_normal(self, shape: Tuple[int, ...]) -> np.ndarray:
        """Standard normal samples redrawn until they fall inside two standard deviations"""
        values = self._rng.standard_normal(shape)
        outside = np.abs(values) > 2.0
        while np.any(outside):
            values[outside] = self._rng.standard_normal(int(outside.sum()))
            outside = np.abs(values) > 2.0
        return values

    def assign(self, name: str, values: np.ndarray) -> None:
        old = self[name]
        if values.shape != old.shape:
            raise ShapeError(f"cannot assign to '{name}'", values.shape, old.shape)
        self._params[name] = Tensor(values.astype(self.dtype, copy=False), requires_grad=True, name=name)

    def bind(self, name: str, tensor: Tensor) -> None:
        """Store an existing tensor as-is, e.g. a leaf owned by a gradient check."""
        self._params[name] = tensor

    def bump_version(self) -> None:
        self.version += 1

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = sorted(set(self._params) - set(state))
        unexpected = sorted(set(state) - set(self._params))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, values in state.items():
            self.assign(name, np.asarray(values))
        self.bump_version()
        logger.debug("Loaded %d parameters (version %d)", len(state), self.version)


class ParamView:
    """Prefix-scoped window onto a :class:`ParamStore`"""

    def __init__(self, store: ParamStore, prefix: str = ""):
        self.store = store
        self.prefix = prefix

    def _full(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name

    def child(self, name: str) -> "ParamView":
        return ParamView(self.store, self._full(name))

    def __getitem__(self, name: str) -> Tensor:
        return self.store[self._full(name)]

    def __contains__(self, name: str) -> bool:
        return self._full(name) in self.store

    def create(self, name: str, shape: Sequence[int], init: str = "zeros", **kwargs: object) -> Tensor:
        return self.store.create(self._full(name), shape, init, **kwargs)  # type: ignore[arg-type]


def count_parameters(store: ParamStore, prefix: str = "") -> int:
    """Number of scalar parameters, optionally restricted to names under ``prefix``."""
    return sum(t.size for name, t in store.items() if name.startswith(prefix))
