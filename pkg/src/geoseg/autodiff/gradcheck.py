"""
Central finite-difference gradient checking
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .kernels import mul, sum_all
from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

Kernel = Callable[..., Tensor]


def _scalarize(out: np.ndarray, projection: np.ndarray) -> float:
    return float(np.sum(out * projection))


def grad_check(
    kernel: Kernel,
    inputs: Sequence[Union[np.ndarray, Tensor]],
    eps: float = 1e-5,
    seed: int = 0,
    max_elements: Optional[int] = None,
) -> float:
    """Return the max relative error between backward() and central differences.

    Non-scalar outputs are reduced with a fixed random projection so every output
    element contributes. Inputs are promoted to float64. ``max_elements`` limits
    each input to a seeded random subset of its elements.
    """
    arrays = [np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64) for x in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = kernel(*leaves)
    projection = np.random.default_rng(seed).standard_normal(out.shape)
    loss = sum_all(mul(out, Tensor(projection))) if out.size > 1 else out
    if out.size == 1:
        projection = np.ones(out.shape)
    backward(loss)

    worst = 0.0
    with no_grad():
        for index, (leaf, base) in enumerate(zip(leaves, arrays)):
            analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)
            positions = list(np.ndindex(base.shape))
            if max_elements is not None and len(positions) > max_elements:
                chosen = np.random.default_rng(seed + index).choice(
                    len(positions), max_elements, replace=False
                )
                positions = [positions[i] for i in sorted(chosen)]
            for pos in positions:
                plus = [a.copy() for a in arrays]
                minus = [a.copy() for a in arrays]
                plus[index][pos] += eps
                minus[index][pos] -= eps
                f_plus = _scalarize(kernel(*[Tensor(a) for a in plus]).data, projection)
                f_minus = _scalarize(kernel(*[Tensor(a) for a in minus]).data, projection)
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(analytic[pos])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    logger.debug("grad_check max relative error %.3e", worst)
    return worst


def grad_check_seeds(
    build: Callable[[np.random.Generator], Tuple[Kernel, List[np.ndarray]]],
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    max_elements: Optional[int] = None,
) -> float:
    """Run ``grad_check`` on a case rebuilt for every seed; return the worst error."""
    worst = 0.0
    for seed in seeds:
        kernel, inputs = build(np.random.default_rng(seed))
        worst = max(worst, grad_check(kernel, inputs, seed=seed, max_elements=max_elements))
    return worst
