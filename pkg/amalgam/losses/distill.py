"""
Soft-Target Distillation
========================

Builds the union-space target from teacher outputs and measures the KL
divergence between the student's distribution and that target.

Two target constructions are kept distinct:

* ``renormalized``: per-teacher softmax blocks placed in their slots and
  scaled by ``1 / T`` so the row sums to one.
* ``concatenated-logits``: raw teacher logits placed in their slots and
  passed through a single softmax.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np

from ..core.errors import DataFormatError, ShapeError
from ..core.tensor import Tensor, log_softmax, softmax, xlogy

logger = logging.getLogger(__name__)

SlotRange = Tuple[int, int]
TARGET_FLOOR = 1e-300


class KLDirection(str, Enum):
    STUDENT_FIRST = "student-first"
    TEACHER_FIRST = "teacher-first"


class TargetMode(str, Enum):
    RENORMALIZED = "renormalized"
    CONCATENATED_LOGITS = "concatenated-logits"


@dataclass
class TeacherBlock:
    """One teacher's output rows and the union slots they occupy."""

    values: np.ndarray
    slots: SlotRange

    def __post_init__(self) -> None:
        if isinstance(self.values, Tensor):
            self.values = self.values.values
        self.values = np.asarray(self.values, dtype=np.float64)
        start, stop = self.slots
        self.slots = (int(start), int(stop))
        if self.values.ndim != 2 or self.values.shape[1] != stop - start:
            raise ShapeError("TeacherBlock", self.values.shape, detail=f"slot range {self.slots}")


def validate_slot_ranges(ranges: Sequence[SlotRange], num_classes: int) -> None:
    """
    Check that slot ranges are disjoint and cover ``[0, num_classes)``.

    Raises:
        DataFormatError: on overlap, gaps or out-of-range slots
    """
    ordered = sorted((int(a), int(b)) for a, b in ranges)
    cursor = 0
    for start, stop in ordered:
        if stop <= start:
            raise DataFormatError(f"empty slot range [{start}, {stop})")
        if start < cursor:
            raise DataFormatError(f"slot range [{start}, {stop}) overlaps a previous range")
        if start > cursor:
            raise DataFormatError(f"slots [{cursor}, {start}) are not covered by any teacher")
        cursor = stop
    if cursor != num_classes:
        raise DataFormatError(f"slot ranges cover [0, {cursor}) but the union has {num_classes} classes")


def _check_blocks(blocks: Sequence[TeacherBlock], num_classes: int) -> int:
    if not blocks:
        raise DataFormatError("no teacher blocks given")
    validate_slot_ranges([b.slots for b in blocks], num_classes)
    rows = {b.values.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ShapeError("soft target", (min(rows),), (max(rows),), detail="teacher blocks disagree on batch size")
    return rows.pop()


def renormalized_target(blocks: Sequence[TeacherBlock], num_classes: int) -> np.ndarray:
    """Concatenate per-teacher probability blocks into their slots, scaled by ``1 / T``."""
    batch = _check_blocks(blocks, num_classes)
    target = np.zeros((batch, num_classes))
    for block in blocks:
        sums = block.values.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(block.values < 0.0):
            raise DataFormatError(f"teacher block at slots {block.slots} is not a probability distribution")
        start, stop = block.slots
        target[:, start:stop] = block.values
    return target / len(blocks)


def concatenated_logit_target(blocks: Sequence[TeacherBlock], num_classes: int, temperature: float = 1.0) -> np.ndarray:
    """Place raw teacher logits into their slots and apply one softmax."""
    batch = _check_blocks(blocks, num_classes)
    logits = np.zeros((batch, num_classes))
    for block in blocks:
        start, stop = block.slots
        logits[:, start:stop] = block.values
    return softmax(Tensor(logits / temperature)).values


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """Mean over rows of ``KL(p || q)`` with ``0 log 0 = 0``."""
    if p.shape != q.shape or p.ndim != 2:
        raise ShapeError("kl_divergence", p.shape, q.shape)
    return (xlogy(p, p) - xlogy(p, q)).sum(axis=1).mean()


def distill_to_target(
    student_logits: Tensor,
    target: np.ndarray,
    temperature: float = 1.0,
    direction: Union[str, KLDirection] = KLDirection.STUDENT_FIRST,
) -> Tensor:
    """
    KL divergence between the tempered student distribution and a fixed target.

    ``student-first`` computes ``KL(student || target)``; ``teacher-first``
    the conventional ``KL(target || student)``.
    """
    if not temperature > 0.0:
        raise ValueError(f"distillation temperature must be positive, got {temperature}")
    target = np.asarray(target, dtype=np.float64)
    if student_logits.shape != target.shape:
        raise ShapeError("distill_to_target", student_logits.shape, target.shape)
    direction = KLDirection(direction)
    log_student = log_softmax(student_logits.scale(1.0 / temperature))
    log_target = Tensor(np.log(np.maximum(target, TARGET_FLOOR)))
    if direction is KLDirection.STUDENT_FIRST:
        student = softmax(student_logits.scale(1.0 / temperature))
        return (student * (log_student - log_target)).sum(axis=1).mean()
    fixed = Tensor(target)
    return (xlogy(fixed, fixed) - fixed * log_student).sum(axis=1).mean()


def soft_target_loss(
    student_logits: Tensor,
    teacher_prob_blocks: Sequence[TeacherBlock],
    temperature: float = 1.0,
    direction: Union[str, KLDirection] = KLDirection.STUDENT_FIRST,
) -> Tensor:
    """
    Distill the student towards the renormalized concatenation of teacher softmax blocks.

    Args:
        student_logits: ``B x C`` union-space logits
        teacher_prob_blocks: Probability rows per teacher with their slot ranges
        temperature: Distillation temperature applied to the student logits
        direction: KL argument order

    Returns:
        Mean over the batch of the KL divergence
    """
    target = renormalized_target(teacher_prob_blocks, student_logits.shape[1])
    return distill_to_target(student_logits, target, temperature, direction)
