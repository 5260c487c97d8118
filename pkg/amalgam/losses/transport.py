"""
Transport Maps and Inter-Model Contrast
=======================================

Within-model pairwise distances, their row-softmax transport maps, the
cosine matching of transport-map rows between the student and each teacher,
and the distance-discrepancy diagnostic between two models' distance
matrices.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from ..core.errors import DegenerateInputError, ShapeError
from ..core.tensor import Tensor, diagonal, normalize_rows, relu, reshape, softmax, sqrt, squared_distances
from .alignment import KernelBank
from .contrastive import REDUCTIONS

logger = logging.getLogger(__name__)

GW_MAX_BATCH = 64


class DistanceMetric(str, Enum):
    """Instance-to-instance distance used inside a transport map."""

    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    MMD_SPATIAL = "mmd-spatial"

    @classmethod
    def parse(cls, value: Union[str, "DistanceMetric"]) -> "DistanceMetric":
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown distance metric {value!r}; expected one of {choices}") from None


def _masks(batch: int):
    eye = np.eye(batch)
    return Tensor(eye), Tensor(1.0 - eye)


def _euclidean(features: Tensor) -> Tensor:
    eye, off = _masks(features.shape[0])
    # the diagonal is lifted to 1 before sqrt and masked back to exactly 0
    sq = squared_distances(features, features) * off + eye
    return sqrt(sq) * off


def _cosine(features: Tensor) -> Tensor:
    if np.any(np.linalg.norm(features.values, axis=1) == 0.0):
        raise DegenerateInputError("cosine distance: zero-norm feature row")
    _, off = _masks(features.shape[0])
    unit = normalize_rows(features)
    return relu((1.0 - unit @ unit.T) * off)


def _mmd_spatial(features: Tensor, spatial_channels: Optional[int]) -> Tensor:
    batch, width = features.shape
    if not spatial_channels or width % spatial_channels != 0:
        raise ShapeError(
            "pairwise_distance_matrix",
            features.shape,
            detail="mmd-spatial requires a declared spatial factorization m = c * s",
        )
    positions = width // spatial_channels
    # each instance is laid out position-major: s consecutive vectors of c channels
    points = reshape(features, (batch * positions, spatial_channels))
    bank = KernelBank.median_heuristic(points.values)
    kernel = bank.kernel(squared_distances(points, points))

    pooling = np.zeros((batch, batch * positions))
    for i in range(batch):
        pooling[i, i * positions:(i + 1) * positions] = 1.0 / positions
    pool = Tensor(pooling)
    means = pool @ kernel @ pool.T
    self_terms = diagonal(means)
    _, off = _masks(batch)
    return relu((self_terms + self_terms.T - means.scale(2.0)) * off)


def pairwise_distance_matrix(
    features: Tensor,
    metric: Union[str, DistanceMetric] = DistanceMetric.EUCLIDEAN,
    spatial_channels: Optional[int] = None,
) -> Tensor:
    """
    Symmetric ``B x B`` matrix of instance distances with a zero diagonal.

    Args:
        features: ``B x m`` flattened features of one model
        metric: ``euclidean``, ``cosine`` (``1 - cos``) or ``mmd-spatial``
        spatial_channels: Channel count ``c`` of the factorization ``m = c * s``,
            required for ``mmd-spatial``

    Returns:
        Differentiable distance matrix
    """
    metric = DistanceMetric.parse(metric)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ShapeError("pairwise_distance_matrix", features.shape, detail="expected B x m with B >= 1")
    if metric is DistanceMetric.EUCLIDEAN:
        return _euclidean(features)
    if metric is DistanceMetric.COSINE:
        return _cosine(features)
    return _mmd_spatial(features, spatial_channels)


@dataclass
class TransportMap:
    """Row-stochastic ``B x B`` affinity of a batch within one model."""

    pi: Tensor
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    source_id: str = ""

    @property
    def batch_size(self) -> int:
        return self.pi.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.pi.values.sum(axis=1)

    def violations(self, tolerance: float = 1e-9) -> list:
        """List the map invariants that do not hold."""
        pi = self.pi.values
        problems = []
        if np.any(np.abs(pi.sum(axis=1) - 1.0) > tolerance):
            problems.append("row sums differ from 1")
        if np.any(pi <= 0.0):
            problems.append("non-positive entry")
        if np.any(np.diag(pi) < pi.max(axis=1)):
            problems.append("diagonal is not the row maximum")
        return problems


def transport_map(
    distances: Tensor,
    metric: Union[str, DistanceMetric] = DistanceMetric.EUCLIDEAN,
    source_id: str = "",
) -> TransportMap:
    """Row-wise softmax of negated distances, ``pi_ij = e^{-D_ij} / sum_j e^{-D_ij}``."""
    if distances.ndim != 2 or distances.shape[0] != distances.shape[1]:
        raise ShapeError("transport_map", distances.shape, detail="expected a square distance matrix")
    return TransportMap(pi=softmax(-distances), metric=DistanceMetric.parse(metric), source_id=source_id)


def _map_contrast(student: Tensor, teacher: Tensor, reduction: str) -> Tensor:
    batch = student.shape[0]
    similarity = normalize_rows(student) @ normalize_rows(teacher).T
    positive = 1.0 - diagonal(similarity)
    if batch == 1:
        return positive.mean()
    negative = (similarity * _masks(batch)[1]).sum(axis=1, keepdims=True)
    if reduction == "mean":
        negative = negative.scale(1.0 / (batch - 1))
    return (positive + negative).mean()


def inter_contrast_loss(
    pi_student: TransportMap,
    pi_teachers: Sequence[TransportMap],
    reduction: str = "mean",
) -> Tensor:
    """
    Distance-based inter-model contrast.

    Row ``k`` of the student's map and row ``k`` of a teacher's map form the
    positive pair; the other rows of that teacher's map are the negatives.

    Args:
        pi_student: Transport map of the student features
        pi_teachers: One transport map per teacher, same batch size
        reduction: ``mean`` or ``sum`` over the negatives of a row

    Returns:
        Sum over teachers of the row-averaged contrast
    """
    if reduction not in REDUCTIONS:
        raise ValueError(f"unknown reduction {reduction!r}; expected one of {REDUCTIONS}")
    if not pi_teachers:
        raise DegenerateInputError("inter_contrast_loss: no teacher transport maps")
    total: Optional[Tensor] = None
    for teacher in pi_teachers:
        if teacher.pi.shape != pi_student.pi.shape:
            raise ShapeError("inter_contrast_loss", pi_student.pi.shape, teacher.pi.shape)
        term = _map_contrast(pi_student.pi, teacher.pi, reduction)
        total = term if total is None else total + term
    return total


# -- distance-discrepancy diagnostic -------------------------------------------


def _as_matrix(x: Union[np.ndarray, Tensor]) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, Tensor) else x, dtype=np.float64)


def _gw_inputs(dx, dy, pi):
    dx, dy, pi = _as_matrix(dx), _as_matrix(dy), _as_matrix(pi)
    if dx.ndim != 2 or dx.shape[0] != dx.shape[1] or dy.ndim != 2 or dy.shape[0] != dy.shape[1]:
        raise ShapeError("gw_discrepancy", dx.shape, dy.shape, detail="distance matrices must be square")
    if pi.shape != (dx.shape[0], dy.shape[0]):
        raise ShapeError("gw_discrepancy", pi.shape, (dx.shape[0], dy.shape[0]), detail="coupling shape")
    if max(dx.shape[0], dy.shape[0]) > GW_MAX_BATCH:
        raise ShapeError("gw_discrepancy", dx.shape, dy.shape, detail=f"diagnostic limited to B <= {GW_MAX_BATCH}")
    if np.any(pi < 0.0):
        raise ValueError("gw_discrepancy: coupling has negative entries")
    return dx, dy, pi


def gw_discrepancy(
    dx: Union[np.ndarray, Tensor],
    dy: Union[np.ndarray, Tensor],
    pi: Union[np.ndarray, Tensor],
    q: float = 2.0,
) -> float:
    """
    ``sum_{i,j,k,l} |Dx_ik - Dy_jl|^q pi_ij pi_kl``, a diagnostic only.

    For ``q = 2`` the quadratic expansion is used; other exponents contract
    the full four-index array.
    """
    if not q > 0.0:
        raise ValueError(f"gw exponent must be positive, got {q}")
    dx, dy, pi = _gw_inputs(dx, dy, pi)
    if q == 2.0:
        row_mass = pi.sum(axis=1)
        col_mass = pi.sum(axis=0)
        const = (dx ** 2 @ row_mass)[:, None] + (dy ** 2 @ col_mass)[None, :]
        cross = dx @ pi @ dy.T
        value = float(np.sum((const - 2.0 * cross) * pi))
    else:
        gaps = np.abs(dx[:, None, :, None] - dy[None, :, None, :]) ** q
        value = float(np.einsum("ijkl,ij,kl->", gaps, pi, pi))
    return max(value, 0.0)


def gw_discrepancy_bruteforce(
    dx: Union[np.ndarray, Tensor],
    dy: Union[np.ndarray, Tensor],
    pi: Union[np.ndarray, Tensor],
    q: float = 2.0,
) -> float:
    """Quadruple-loop reference for :func:`gw_discrepancy`."""
    dx, dy, pi = _gw_inputs(dx, dy, pi)
    n, m = pi.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            for k in range(n):
                for l in range(m):
                    total += abs(dx[i, k] - dy[j, l]) ** q * pi[i, j] * pi[k, l]
    return total
