"""
Contrastive Losses
==================

Cosine similarity, the InfoNCE objective and the margin-hinged intra-model
contrast between two augmented views of one batch. Negatives for row ``i``
are the other rows of the same mini-batch.
"""

import logging

import numpy as np

from ..core.errors import DegenerateInputError, ShapeError
from ..core.tensor import Tensor, diagonal, log_softmax, normalize_rows, relu, reshape, row_norm

logger = logging.getLogger(__name__)

REDUCTIONS = ("mean", "sum")


def _as_row(v: Tensor) -> Tensor:
    if v.ndim == 1:
        return reshape(v, (1, v.shape[0]))
    if v.ndim == 2 and v.shape[0] == 1:
        return v
    raise ShapeError("cosine_similarity", v.shape, detail="expected a vector")


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """
    Cosine similarity ``a . b / (|a| |b|)`` of two vectors, as a scalar tensor.

    Raises:
        DegenerateInputError: if either vector has zero norm
    """
    a, b = _as_row(a), _as_row(b)
    if a.shape != b.shape:
        raise ShapeError("cosine_similarity", a.shape, b.shape)
    if not np.any(a.values) or not np.any(b.values):
        raise DegenerateInputError("cosine_similarity: zero-norm input has no direction")
    dot = (a * b).sum()
    return dot / (row_norm(a) * row_norm(b)).sum()


def pairwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """``B x B`` matrix of cosine similarities between rows of ``a`` and ``b``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("pairwise_cosine", a.shape, b.shape)
    return normalize_rows(a) @ normalize_rows(b).T


def _check_views(z_a: Tensor, z_b: Tensor, op: str) -> int:
    if z_a.ndim != 2 or z_a.shape != z_b.shape:
        raise ShapeError(op, z_a.shape, z_b.shape)
    if z_a.shape[0] < 1:
        raise DegenerateInputError(f"{op}: empty batch")
    return z_a.shape[0]


def _off_diagonal_mask(batch: int) -> Tensor:
    return Tensor(1.0 - np.eye(batch))


def info_nce_loss(z_a: Tensor, z_b: Tensor, temperature: float) -> Tensor:
    """
    InfoNCE with in-batch negatives.

    Args:
        z_a: ``B x d`` L2-normalized embeddings of the first view
        z_b: ``B x d`` L2-normalized embeddings of the second view
        temperature: Softmax temperature, must be positive

    Returns:
        Mean over rows of ``-log(e^{s_ii/t} / sum_j e^{s_ij/t})``
    """
    if not temperature > 0.0:
        raise ValueError(f"InfoNCE temperature must be positive, got {temperature}")
    _check_views(z_a, z_b, "info_nce_loss")
    logits = (z_a @ z_b.T).scale(1.0 / temperature)
    return -diagonal(log_softmax(logits)).mean()


def intra_margin_loss(z_view1: Tensor, z_view2: Tensor, alpha: float, reduction: str = "mean") -> Tensor:
    """
    Margin-hinged intra-model contrast.

    Each row pays ``1 - s(z1_i, z2_i)`` for its positive pair plus
    ``max(0, s(z1_i, z2_j) - alpha)`` for every negative ``j != i``. Negatives
    below the margin contribute nothing and receive no gradient.

    Args:
        z_view1: ``B x d`` L2-normalized embeddings of view 1
        z_view2: ``B x d`` L2-normalized embeddings of view 2
        alpha: Similarity margin in [-1, 1]
        reduction: ``mean`` or ``sum`` over the negatives of a row

    Returns:
        Scalar loss averaged over rows
    """
    if reduction not in REDUCTIONS:
        raise ValueError(f"unknown reduction {reduction!r}; expected one of {REDUCTIONS}")
    batch = _check_views(z_view1, z_view2, "intra_margin_loss")
    similarity = z_view1 @ z_view2.T
    positive = 1.0 - diagonal(similarity)
    if batch == 1:
        return positive.mean()

    hinge = relu(similarity - alpha) * _off_diagonal_mask(batch)
    negative = hinge.sum(axis=1, keepdims=True)
    if reduction == "mean":
        negative = negative.scale(1.0 / (batch - 1))
    return (positive + negative).mean()
