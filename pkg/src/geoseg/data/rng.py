"""
Platform-independent pseudo-random numbers

A counter-based SplitMix64: the i-th 64-bit draw of a stream seeded with ``s``
is ``mix(s + i * GOLDEN)``, so any block of draws can be produced at once with
numpy and the sequence is identical on every platform.
"""

import math
from typing import Sequence, Tuple, Union

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

Shape = Union[int, Tuple[int, ...]]


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int"""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit sub-seed for (seed, key1, key2, ...)"""
    h = mix64(seed + GOLDEN)
    for key in keys:
        h = mix64((h ^ (key & MASK64)) + GOLDEN)
    return h


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
        return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Stream of uniform, normal and integer draws from a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        index = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + index * np.uint64(GOLDEN)
        return _mix_array(state)

    def random(self, shape: Shape = ()) -> np.ndarray:
        """Uniform float64 in [0, 1) with 53 random bits."""
        dims = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(dims)) if dims else 1
        bits = self.next_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) * 2.0 ** -53).reshape(dims)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape: Shape = ()) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def uniform_scalar(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self.uniform(low, high))

    def normal(self, shape: Shape = ()) -> np.ndarray:
        """Standard normal draws by the Box-Muller transform."""
        dims = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(dims)) if dims else 1
        u1 = 1.0 - self.random(n)
        u2 = self.random(n)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
        return z.reshape(dims)

    def integers(self, low: int, high: int, shape: Shape = ()) -> np.ndarray:
        """Integers in [low, high)"""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        values = np.floor(low + (high - low) * self.random(shape)).astype(np.int64)
        return np.minimum(values, high - 1)

    def integer(self, low: int, high: int) -> int:
        return int(self.integers(low, high))

    def choice(self, options: Sequence[int]) -> int:
        return options[self.integer(0, len(options))]
