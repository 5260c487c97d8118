"""
Core module imports
"""

from .errors import (
    AmalgamError,
    CheckpointError,
    CheckpointNotFoundError,
    ConfigError,
    DataFormatError,
    DegenerateInputError,
    NonFiniteError,
    ShapeError,
)
from .gradcheck import grad_check, grad_check_inputs
from .tensor import (
    Graph,
    Tensor,
    concat,
    diagonal,
    exp,
    gather_rows,
    log,
    log_softmax,
    matmul,
    no_grad,
    normalize_rows,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    row_norm,
    softmax,
    sqrt,
    squared_distances,
    transpose,
    xlogy,
)

__all__ = [
    "AmalgamError",
    "CheckpointError",
    "CheckpointNotFoundError",
    "ConfigError",
    "DataFormatError",
    "DegenerateInputError",
    "NonFiniteError",
    "ShapeError",
    "grad_check",
    "grad_check_inputs",
    "Graph",
    "Tensor",
    "concat",
    "diagonal",
    "exp",
    "gather_rows",
    "log",
    "log_softmax",
    "matmul",
    "no_grad",
    "normalize_rows",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "row_norm",
    "softmax",
    "sqrt",
    "squared_distances",
    "transpose",
    "xlogy",
]
