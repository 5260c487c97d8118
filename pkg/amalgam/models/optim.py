"""
Optimization
============

Adam with decoupled weight decay, the cosine learning-rate schedule and
global gradient-norm clipping.
"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from ..core.errors import NonFiniteError, ShapeError
from ..core.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Adam moments per parameter name plus the shared step counter."""

    lr: float = 5e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=OrderedDict)

    def __post_init__(self) -> None:
        if self.lr < 0.0 or self.weight_decay < 0.0:
            raise ValueError(f"lr and weight decay must be non-negative, got {self.lr}, {self.weight_decay}")


def adam_step(
    state: OptimizerState,
    params: Mapping[str, Tensor],
    grads: Optional[Mapping[str, np.ndarray]] = None,
    lr: Optional[float] = None,
) -> None:
    """
    Apply one Adam update in place.

    Args:
        state: Optimizer state; its step counter is advanced by one
        params: Parameters by name
        grads: Gradients by name; defaults to each parameter's ``grad``
            (a missing ``grad`` counts as zero)
        lr: Learning rate for this step; defaults to ``state.lr``
    """
    lr = state.lr if lr is None else float(lr)
    resolved: Dict[str, np.ndarray] = OrderedDict()
    for name, tensor in params.items():
        grad = grads[name] if grads is not None else tensor.grad
        grad = np.zeros_like(tensor.values) if grad is None else np.asarray(grad, dtype=np.float64)
        if grad.shape != tensor.shape:
            raise ShapeError(f"adam_step {name}", tensor.shape, grad.shape)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"gradient of {name} is not finite", parameter=name)
        resolved[name] = grad

    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for name, grad in resolved.items():
        tensor = params[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m, v = np.zeros_like(grad), np.zeros_like(grad)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name], state.second_moment[name] = m, v
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        tensor.values = tensor.values - lr * update - lr * state.weight_decay * tensor.values


def cosine_lr(base_lr: float, epoch: float, total_epochs: int) -> float:
    """``base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs))``."""
    if total_epochs <= 0:
        raise ValueError(f"total_epochs must be positive, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def global_grad_norm(params: Mapping[str, Tensor]) -> float:
    total = 0.0
    for tensor in params.values():
        if tensor.grad is not None:
            total += float(np.sum(tensor.grad * tensor.grad))
    return math.sqrt(total)


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """Rescale gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    if max_norm <= 0.0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_grad_norm(params)
    if norm > max_norm:
        factor = max_norm / norm
        for tensor in params.values():
            if tensor.grad is not None:
                tensor.grad = tensor.grad * factor
        logger.debug(f"clipped gradient norm {norm:.4g} to {max_norm}")
    return norm
