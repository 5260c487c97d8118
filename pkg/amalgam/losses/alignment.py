"""
Common-Space Alignment
======================

Multi-kernel maximum mean discrepancy between student and teacher features
in the shared common space. The estimator is the biased V-statistic, which
keeps the diagonal kernel terms and is never negative.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from ..core.errors import DegenerateInputError, ShapeError
from ..core.tensor import Tensor, exp, squared_distances

logger = logging.getLogger(__name__)

DEFAULT_SCALES: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelBank:
    """
    Gaussian kernels ``e^{-|a-b|^2 / (2 bw^2)}`` combined with convex weights.

    Attributes:
        bandwidths: Strictly positive kernel widths
        coefficients: Non-negative weights summing to one
    """

    bandwidths: Tuple[float, ...]
    coefficients: Tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        bandwidths = tuple(float(b) for b in self.bandwidths)
        coefficients = tuple(float(c) for c in self.coefficients) or tuple(
            1.0 / len(bandwidths) for _ in bandwidths
        )
        object.__setattr__(self, "bandwidths", bandwidths)
        object.__setattr__(self, "coefficients", coefficients)
        if not bandwidths:
            raise ValueError("kernel bank needs at least one bandwidth")
        if len(coefficients) != len(bandwidths):
            raise ValueError(
                f"kernel bank has {len(bandwidths)} bandwidths but {len(coefficients)} coefficients"
            )
        if any(not np.isfinite(b) or b <= 0.0 for b in bandwidths):
            raise ValueError(f"kernel bandwidths must be strictly positive, got {bandwidths}")
        if any(c < 0.0 for c in coefficients) or abs(sum(coefficients) - 1.0) > 1e-12:
            raise ValueError(f"kernel coefficients must be non-negative and sum to 1, got {coefficients}")

    @classmethod
    def single(cls, bandwidth: float) -> "KernelBank":
        return cls(bandwidths=(bandwidth,), coefficients=(1.0,))

    @classmethod
    def median_heuristic(cls, *feature_sets: np.ndarray, scales: Sequence[float] = DEFAULT_SCALES) -> "KernelBank":
        """
        Bandwidths at ``scales`` times the median pairwise distance of the pooled sets.

        The bank is a constant: no gradient flows through the bandwidths.
        """
        pooled = np.concatenate([np.asarray(f, dtype=np.float64) for f in feature_sets], axis=0)
        distances = pdist(pooled) if pooled.shape[0] > 1 else np.zeros(0)
        median = float(np.median(distances)) if distances.size else 0.0
        if not median > 0.0:
            logger.warning("median pairwise distance is zero; falling back to unit bandwidth")
            median = 1.0
        return cls(bandwidths=tuple(median * s for s in scales))

    def kernel(self, squared: Tensor) -> Tensor:
        """Combined kernel matrix from squared distances."""
        total: Optional[Tensor] = None
        for bandwidth, weight in zip(self.bandwidths, self.coefficients):
            term = exp(squared.scale(-1.0 / (2.0 * bandwidth ** 2))).scale(weight)
            total = term if total is None else total + term
        return total

    def to_dict(self) -> dict:
        return {"bandwidths": list(self.bandwidths), "coefficients": list(self.coefficients)}


def mmd_sq(f_s: Tensor, f_t: Tensor, bank: Optional[KernelBank] = None) -> Tensor:
    """
    Biased multi-kernel MMD² between two feature sets.

    Args:
        f_s: Student features, ``B_s x d``
        f_t: Teacher features, ``B_t x d``
        bank: Kernel bank; the median heuristic over both sets when omitted

    Returns:
        ``mean K(s,s) - 2 mean K(s,t) + mean K(t,t)`` as a scalar tensor
    """
    if f_s.ndim != 2 or f_t.ndim != 2 or f_s.shape[1] != f_t.shape[1]:
        raise ShapeError("mmd_sq", f_s.shape, f_t.shape)
    if f_s.shape[0] < 1 or f_t.shape[0] < 1:
        raise DegenerateInputError("mmd_sq: empty feature set")
    if bank is None:
        bank = KernelBank.median_heuristic(f_s.values, f_t.values)
    k_ss = bank.kernel(squared_distances(f_s, f_s)).mean()
    k_st = bank.kernel(squared_distances(f_s, f_t)).mean()
    k_tt = bank.kernel(squared_distances(f_t, f_t)).mean()
    return k_ss - k_st.scale(2.0) + k_tt


def alignment_loss(f_s: Tensor, f_teachers: Sequence[Tensor], bank: Optional[KernelBank] = None) -> Tensor:
    """
    Sum over teachers of ``mmd_sq(f_s, f_t)``.

    When ``bank`` is omitted each pair gets its own median-heuristic bank.
    """
    if not f_teachers:
        raise DegenerateInputError("alignment_loss: empty teacher list")
    total: Optional[Tensor] = None
    for f_t in f_teachers:
        term = mmd_sq(f_s, f_t, bank)
        total = term if total is None else total + term
    return total
