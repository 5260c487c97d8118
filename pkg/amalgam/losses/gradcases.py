"""
Loss Gradient Cases
===================

Randomized gradient checks for every trained loss, run by ``amalgam gradcheck``
and by the test-suite.
"""

import logging
import zlib
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np

from ..core.gradcheck import grad_check_inputs
from ..core.tensor import Tensor, normalize_rows, softmax
from .alignment import KernelBank, alignment_loss, mmd_sq
from .contrastive import info_nce_loss, intra_margin_loss
from .distill import TeacherBlock, soft_target_loss
from .objective import LossWeights, total_loss
from .transport import inter_contrast_loss, pairwise_distance_matrix, transport_map

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
Case = Tuple[Callable[..., Tensor], List[np.ndarray]]


def _info_nce(rng: np.random.Generator) -> Case:
    batch, dim = rng.integers(2, 6), rng.integers(2, 5)
    tau = float(rng.uniform(0.2, 1.0))

    def f(a: Tensor, b: Tensor) -> Tensor:
        return info_nce_loss(normalize_rows(a), normalize_rows(b), tau)

    return f, [rng.normal(size=(batch, dim)), rng.normal(size=(batch, dim))]


def _intra_margin(rng: np.random.Generator) -> Case:
    batch, dim = rng.integers(2, 6), rng.integers(2, 5)
    alpha = float(rng.uniform(-0.5, 0.5))

    def f(a: Tensor, b: Tensor) -> Tensor:
        return intra_margin_loss(normalize_rows(a), normalize_rows(b), alpha)

    return f, [rng.normal(size=(batch, dim)), rng.normal(size=(batch, dim))]


def _inter_contrast(rng: np.random.Generator) -> Case:
    batch = rng.integers(2, 6)
    widths = (rng.integers(2, 5), rng.integers(2, 5))

    def f(student: Tensor, teacher: Tensor) -> Tensor:
        pi_s = transport_map(pairwise_distance_matrix(student, "euclidean"))
        pi_t = transport_map(pairwise_distance_matrix(teacher, "euclidean"))
        return inter_contrast_loss(pi_s, [pi_t])

    return f, [rng.normal(size=(batch, widths[0])), rng.normal(size=(batch, widths[1]))]


def _mmd(rng: np.random.Generator) -> Case:
    batch, dim = rng.integers(2, 6), rng.integers(2, 5)
    bank = KernelBank(bandwidths=tuple(rng.uniform(0.5, 3.0, size=3)))

    def f(s: Tensor, t: Tensor) -> Tensor:
        return mmd_sq(s, t, bank)

    return f, [rng.normal(size=(batch, dim)), rng.normal(loc=0.5, size=(batch, dim))]


def _alignment(rng: np.random.Generator) -> Case:
    batch, dim = rng.integers(2, 6), rng.integers(2, 5)
    bank = KernelBank(bandwidths=tuple(rng.uniform(0.5, 3.0, size=2)))

    def f(s: Tensor, t1: Tensor, t2: Tensor) -> Tensor:
        return alignment_loss(s, [t1, t2], bank)

    return f, [rng.normal(size=(batch, dim)) for _ in range(3)]


def _soft_target(rng: np.random.Generator) -> Case:
    batch = rng.integers(1, 5)
    first, second = rng.integers(1, 4), rng.integers(1, 4)
    blocks = [
        TeacherBlock(softmax(Tensor(rng.normal(size=(batch, first)))).values, (0, first)),
        TeacherBlock(softmax(Tensor(rng.normal(size=(batch, second)))).values, (first, first + second)),
    ]
    temperature = float(rng.uniform(0.5, 2.0))
    direction = "student-first" if rng.random() < 0.5 else "teacher-first"

    def f(logits: Tensor) -> Tensor:
        return soft_target_loss(logits, blocks, temperature, direction)

    return f, [rng.normal(size=(batch, first + second))]


def _total(rng: np.random.Generator) -> Case:
    batch, dim = rng.integers(2, 5), rng.integers(2, 4)
    weights = LossWeights(
        lambda_intra=float(rng.uniform(0, 2)),
        lambda_inter=float(rng.uniform(0, 2)),
        lambda_align=float(rng.uniform(0, 10)),
        lambda_std=float(rng.uniform(0, 2)),
    )
    bank = KernelBank(bandwidths=(1.0, 2.0))
    block = TeacherBlock(softmax(Tensor(rng.normal(size=(batch, dim)))).values, (0, dim))

    def f(a: Tensor, b: Tensor) -> Tensor:
        za, zb = normalize_rows(a), normalize_rows(b)
        components = {
            "intra": intra_margin_loss(za, zb, weights.margin),
            "inter": inter_contrast_loss(
                transport_map(pairwise_distance_matrix(a)), [transport_map(pairwise_distance_matrix(b))]
            ),
            "align": mmd_sq(a, b, bank),
            "std": soft_target_loss(a, [block]),
        }
        return total_loss(components, weights).objective

    return f, [rng.normal(size=(batch, dim)), rng.normal(size=(batch, dim))]


GRADIENT_CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    "info_nce_loss": _info_nce,
    "intra_margin_loss": _intra_margin,
    "inter_contrast_loss": _inter_contrast,
    "mmd_sq": _mmd,
    "alignment_loss": _alignment,
    "soft_target_loss": _soft_target,
    "total_loss": _total,
}


@dataclass
class GradCheckResult:
    name: str
    max_error: float
    configurations: int
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def case_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for one case, keyed by the run seed and a stable hash of the case name."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def run_gradient_checks(
    names: Iterable[str] = tuple(GRADIENT_CASES),
    configurations: int = 10,
    epsilon: float = 1e-5,
    seed: int = 0,
) -> List[GradCheckResult]:
    """
    Run each named case at ``configurations`` random points.

    Returns:
        One result per case holding the worst relative error seen
    """
    results = []
    for name in names:
        if name not in GRADIENT_CASES:
            raise KeyError(f"unknown gradient case {name!r}; expected one of {sorted(GRADIENT_CASES)}")
        rng = case_rng(seed, name)
        worst = 0.0
        for _ in range(configurations):
            f, inputs = GRADIENT_CASES[name](rng)
            worst = max(worst, grad_check_inputs(f, inputs, epsilon=epsilon))
        logger.info(f"gradcheck {name}: max relative error {worst:.3e} over {configurations} configurations")
        results.append(GradCheckResult(name=name, max_error=worst, configurations=configurations))
    return results
