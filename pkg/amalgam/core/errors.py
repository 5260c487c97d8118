"""
Amalgam Exceptions
==================

Domain errors raised across the toolkit. The CLI maps these to exit codes.
"""

from typing import Optional


class AmalgamError(Exception):
    """Base class for every error raised by amalgam."""


class ShapeError(AmalgamError, ValueError):
    """Operand shapes do not conform."""

    def __init__(self, op: str, left: tuple = (), right: Optional[tuple] = None, detail: str = ""):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right) if right is not None else None
        shapes = f"{self.left}" if self.right is None else f"{self.left} and {self.right}"
        message = f"{op}: incompatible shapes {shapes}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class NonFiniteError(AmalgamError, FloatingPointError):
    """A forward value, gradient or loss component is NaN or infinite."""

    def __init__(
        self,
        message: str,
        component: Optional[str] = None,
        batch_index: Optional[int] = None,
        parameter: Optional[str] = None,
    ):
        self.component = component
        self.batch_index = batch_index
        self.parameter = parameter
        super().__init__(message)


class DegenerateInputError(AmalgamError, ValueError):
    """Input has no defined direction or distribution (zero norm, empty set)."""


class ConfigError(AmalgamError, ValueError):
    """Configuration schema or value violation."""

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        self.detail = message
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class DataFormatError(AmalgamError, ValueError):
    """Malformed dataset file, label range or task partition."""


class CheckpointError(AmalgamError):
    """Malformed or incompatible checkpoint."""


class CheckpointNotFoundError(CheckpointError, FileNotFoundError):
    """Referenced checkpoint directory does not exist."""
