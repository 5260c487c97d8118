"""
Finite-Difference Gradient Checking
===================================

Compares analytic gradients from the tensor engine against central
differences at float64 precision.
"""

import logging
from typing import Callable, List, Sequence, Union

import numpy as np

from .errors import NonFiniteError
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

MAX_EPSILON = 1e-3


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / scale))


def _evaluate(f: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> float:
    with no_grad():
        value = f(*[Tensor(a) for a in arrays]).item()
    if not np.isfinite(value):
        raise NonFiniteError("gradient check perturbed point produced a non-finite value")
    return value


def grad_check_inputs(
    f: Callable[..., Tensor],
    inputs: Sequence[Union[np.ndarray, Tensor]],
    epsilon: float = 1e-5,
) -> float:
    """
    Check the gradient of a scalar function with respect to every input.

    Args:
        f: Function of ``len(inputs)`` tensors returning a scalar tensor
        inputs: Points at which to check, one per argument of ``f``
        epsilon: Central-difference step in (0, 1e-3]

    Returns:
        Max over all coordinates of
        ``|analytic - numeric| / max(1, |analytic|, |numeric|)``
    """
    if not 0.0 < epsilon <= MAX_EPSILON:
        raise ValueError(f"epsilon must lie in (0, {MAX_EPSILON}], got {epsilon}")

    arrays: List[np.ndarray] = [
        np.array(x.values if isinstance(x, Tensor) else x, dtype=np.float64) for x in inputs
    ]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = f(*leaves)
    if not np.isfinite(out.item()):
        raise NonFiniteError("gradient check base point produced a non-finite value")
    out.backward()

    worst = 0.0
    for position, (leaf, base) in enumerate(zip(leaves, arrays)):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)
        numeric = np.zeros_like(base)
        flat = numeric.reshape(-1)
        for i in range(base.size):
            shifted = [a.copy() for a in arrays]
            shifted[position].reshape(-1)[i] += epsilon
            upper = _evaluate(f, shifted)
            shifted[position].reshape(-1)[i] -= 2.0 * epsilon
            lower = _evaluate(f, shifted)
            flat[i] = (upper - lower) / (2.0 * epsilon)
        worst = max(worst, _relative_error(analytic, numeric))

    logger.debug(f"gradient check over {len(arrays)} inputs: max relative error {worst:.3e}")
    return worst


def grad_check(f: Callable[[Tensor], Tensor], point: Union[np.ndarray, Tensor], epsilon: float = 1e-5) -> float:
    """
    Check the gradient of a scalar-valued function of one tensor.

    Example:
    --------
    >>> grad_check(lambda x: (x * x).sum(), np.array([1.0, 2.0, 3.0]))  # doctest: +SKIP
    """
    return grad_check_inputs(f, [point], epsilon=epsilon)
