"""
Reverse-Mode Tensor Engine
==========================

Dense float64 tensors of rank <= 2 with closure-based reverse-mode
differentiation. Every primitive records its parents and a backward closure;
``Tensor.backward`` walks the graph once in reverse topological order.

Example:
--------
>>> x = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
>>> (x * x).sum().backward()
>>> x.grad
array([[2., 4., 6.]])
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateInputError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float, int]
Operand = Union["Tensor", float, int]

MAX_RANK = 2


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self) -> "no_grad":
        self._previous = Tensor._grad_enabled
        Tensor._grad_enabled = False
        return self

    def __exit__(self, *exc) -> None:
        Tensor._grad_enabled = self._previous


def _as_array(values: ArrayLike) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim > MAX_RANK:
        raise ShapeError("tensor", array.shape, detail=f"rank {array.ndim} exceeds {MAX_RANK}")
    return array


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """
    Dense real-valued array participating in reverse-mode differentiation.

    Args:
        values: Array-like data, converted to float64, rank <= 2
        requires_grad: Whether gradients are accumulated into ``grad``
        name: Optional label used in error messages and checkpoints
    """

    _grad_enabled = True
    __array_ufunc__ = None  # numpy scalars defer to the reflected Tensor operators

    def __init__(self, values: ArrayLike, requires_grad: bool = False, name: str = ""):
        self.values = _as_array(values)
        _check_finite(self.values, name or "tensor")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[], None]] = None
        self._op = ""

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, values: ArrayLike) -> "Tensor":
        return cls(values, requires_grad=False)

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def _lift(other: Operand) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    @staticmethod
    def _record(
        values: np.ndarray,
        parents: Tuple["Tensor", ...],
        op: str,
        backward: Callable[["Tensor"], None],
    ) -> "Tensor":
        _check_finite(values, op)
        out = Tensor.__new__(Tensor)
        out.values = values
        out.grad = None
        out.name = ""
        out._op = op
        out.requires_grad = Tensor._grad_enabled and any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._backward = (lambda: backward(out)) if out.requires_grad else None
        return out

    # -- properties -----------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape, detail="tensor is not a scalar")
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = _unbroadcast(grad, self.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += grad

    # -- graph ----------------------------------------------------------------

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """
        Accumulate gradients of this tensor into every leaf that requires them.

        Args:
            grad: Seed gradient; defaults to 1 for scalar tensors
        """
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.values.size != 1:
                raise ShapeError("backward", self.shape, detail="seed gradient required for non-scalar output")
            seed = np.ones_like(self.values)
        else:
            seed = np.broadcast_to(np.asarray(grad, dtype=np.float64), self.shape).copy()

        graph = Graph.build(self)
        for node in graph.order:
            if not node.is_leaf:
                node.grad = np.zeros_like(node.values)
        self._accumulate(seed)

        for node in reversed(graph.order):
            if node._backward is not None:
                node._backward()

        for node in graph.order:
            if node.is_leaf and node.grad is not None:
                _check_finite(node.grad, f"gradient of {node.name or 'leaf'}")

    # -- arithmetic -----------------------------------------------------------

    def _broadcast_check(self, other: "Tensor", op: str) -> None:
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeError(op, self.shape, other.shape) from None

    def __add__(self, other: Operand) -> "Tensor":
        other = Tensor._lift(other)
        self._broadcast_check(other, "add")

        def backward(out: "Tensor") -> None:
            self._accumulate(out.grad)
            other._accumulate(out.grad)

        return Tensor._record(self.values + other.values, (self, other), "add", backward)

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "Tensor":
        other = Tensor._lift(other)
        self._broadcast_check(other, "subtract")

        def backward(out: "Tensor") -> None:
            self._accumulate(out.grad)
            other._accumulate(-out.grad)

        return Tensor._record(self.values - other.values, (self, other), "subtract", backward)

    def __rsub__(self, other: Operand) -> "Tensor":
        return Tensor._lift(other) - self

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __mul__(self, other: Operand) -> "Tensor":
        if not isinstance(other, Tensor):
            return self.scale(float(other))
        self._broadcast_check(other, "multiply")

        def backward(out: "Tensor") -> None:
            self._accumulate(out.grad * other.values)
            other._accumulate(out.grad * self.values)

        return Tensor._record(self.values * other.values, (self, other), "multiply", backward)

    __rmul__ = __mul__

    def scale(self, factor: float) -> "Tensor":
        def backward(out: "Tensor") -> None:
            self._accumulate(out.grad * factor)

        return Tensor._record(self.values * factor, (self,), "scale", backward)

    def __truediv__(self, other: Operand) -> "Tensor":
        if not isinstance(other, Tensor):
            return self.scale(1.0 / float(other))
        self._broadcast_check(other, "divide")
        if np.any(other.values == 0.0):
            raise DegenerateInputError("divide: denominator contains zeros")
        quotient = self.values / other.values

        def backward(out: "Tensor") -> None:
            self._accumulate(out.grad / other.values)
            other._accumulate(-out.grad * quotient / other.values)

        return Tensor._record(quotient, (self, other), "divide", backward)

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return Tensor._lift(other) / self

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    # -- elementwise ----------------------------------------------------------

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


@dataclass
class Graph:
    """Operation records reachable from a root, in topological order."""

    root: Tensor
    order: List[Tensor] = field(default_factory=list)

    @classmethod
    def build(cls, root: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(root=root, order=order)

    def __len__(self) -> int:
        return len(self.order)


# -- primitives -----------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad @ b.values.T)
        b._accumulate(a.values.T @ out.grad)

    return Tensor._record(a.values @ b.values, (a, b), "matmul", backward)


def transpose(a: Tensor) -> Tensor:
    def backward(out: Tensor) -> None:
        a._accumulate(out.grad.T)

    return Tensor._record(a.values.T.copy(), (a,), "transpose", backward)


def exp(a: Tensor) -> Tensor:
    values = np.exp(a.values)

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad * values)

    return Tensor._record(values, (a,), "exp", backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0.0):
        raise NonFiniteError("log: input contains non-positive values")

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad / a.values)

    return Tensor._record(np.log(a.values), (a,), "log", backward)


def sqrt(a: Tensor) -> Tensor:
    """Square root; the gradient at exactly zero is defined as zero."""
    if np.any(a.values < 0.0):
        raise NonFiniteError("sqrt: input contains negative values")
    values = np.sqrt(a.values)

    def backward(out: Tensor) -> None:
        safe = np.where(values > 0.0, values, 1.0)
        a._accumulate(np.where(values > 0.0, out.grad / (2.0 * safe), 0.0))

    return Tensor._record(values, (a,), "sqrt", backward)


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0.0

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad * mask)

    return Tensor._record(np.where(mask, a.values, 0.0), (a,), "relu", backward)


def xlogy(x: Tensor, y: Tensor) -> Tensor:
    """``x * log(y)`` with the convention ``0 * log(y) = 0``."""
    x._broadcast_check(y, "xlogy")
    active = x.values != 0.0
    if np.any(active & (y.values <= 0.0)):
        raise NonFiniteError("xlogy: log of non-positive value with non-zero weight")
    safe_y = np.where(y.values > 0.0, y.values, 1.0)
    log_y = np.log(safe_y)

    def backward(out: Tensor) -> None:
        x._accumulate(out.grad * log_y)
        y._accumulate(np.where(active, out.grad * x.values / safe_y, 0.0))

    return Tensor._record(np.where(active, x.values * log_y, 0.0), (x, y), "xlogy", backward)


def _row_input(a: Tensor, op: str) -> None:
    if a.ndim != 2:
        raise ShapeError(op, a.shape, detail="expected a rank-2 tensor")


def _row_total(values: np.ndarray) -> np.ndarray:
    # sorted summation makes row totals independent of column order
    return np.sort(values, axis=1).sum(axis=1, keepdims=True)


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction."""
    _row_input(a, "softmax")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    values = e / _row_total(e)

    def backward(out: Tensor) -> None:
        inner = (out.grad * values).sum(axis=1, keepdims=True)
        a._accumulate(values * (out.grad - inner))

    return Tensor._record(values, (a,), "softmax", backward)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax."""
    _row_input(a, "log_softmax")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    values = shifted - np.log(_row_total(np.exp(shifted)))
    probs = np.exp(values)

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad - probs * out.grad.sum(axis=1, keepdims=True))

    return Tensor._record(values, (a,), "log_softmax", backward)


def reduce_sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    values = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(out: Tensor) -> None:
        grad = out.grad
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        a._accumulate(np.broadcast_to(grad, a.shape))

    return Tensor._record(np.asarray(values, dtype=np.float64), (a,), "sum", backward)


def reduce_mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise DegenerateInputError("mean over an empty axis")
    return reduce_sum(a, axis=axis, keepdims=keepdims).scale(1.0 / count)


def row_norm(a: Tensor) -> Tensor:
    """L2 norm of every row, shape ``B x 1``."""
    _row_input(a, "row_norm")
    norms = np.sqrt((a.values ** 2).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise DegenerateInputError("row_norm: zero-norm row has no direction")

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad * a.values / norms)

    return Tensor._record(norms, (a,), "row_norm", backward)


def normalize_rows(a: Tensor) -> Tensor:
    return a / row_norm(a)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat", (), detail="no tensors given")
    tensors = tuple(tensors)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim:
            raise ShapeError("concat", tensors[0].shape, t.shape)
        other_axes = [d for i, d in enumerate(t.shape) if i != axis]
        first_axes = [d for i, d in enumerate(tensors[0].shape) if i != axis]
        if other_axes != first_axes:
            raise ShapeError("concat", tensors[0].shape, t.shape)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(out: Tensor) -> None:
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * out.grad.ndim
            index[axis] = slice(start, stop)
            t._accumulate(out.grad[tuple(index)])

    values = np.concatenate([t.values for t in tensors], axis=axis)
    return Tensor._record(values, tensors, "concat", backward)


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    _row_input(a, "gather_rows")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise ShapeError("gather_rows", a.shape, detail="row index out of range")

    def backward(out: Tensor) -> None:
        grad = np.zeros_like(a.values)
        np.add.at(grad, idx, out.grad)
        a._accumulate(grad)

    return Tensor._record(a.values[idx], (a,), "gather_rows", backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        values = a.values.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    if values.ndim > MAX_RANK:
        raise ShapeError("reshape", a.shape, shape, detail=f"rank exceeds {MAX_RANK}")
    original = a.shape

    def backward(out: Tensor) -> None:
        a._accumulate(out.grad.reshape(original))

    return Tensor._record(values.copy(), (a,), "reshape", backward)


def diagonal(a: Tensor) -> Tensor:
    """Diagonal of a square matrix as a ``B x 1`` column."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("diagonal", a.shape, detail="expected a square matrix")
    return (a * Tensor(np.eye(a.shape[0]))).sum(axis=1, keepdims=True)


def squared_distances(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise squared euclidean distances between rows, clamped at zero."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("squared_distances", a.shape, b.shape)
    a_sq = (a * a).sum(axis=1, keepdims=True)
    b_sq = (b * b).sum(axis=1, keepdims=True)
    return relu(a_sq + b_sq.T - (a @ b.T).scale(2.0))
