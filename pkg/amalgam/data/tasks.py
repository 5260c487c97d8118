"""
Tasks
=====

Disjoint teacher specialties over the union label set and the mapping
between union class ids and union slots.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, DataFormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskSpec:
    """One teacher's class subset and the contiguous union slots its outputs occupy."""

    teacher_id: str
    classes: Tuple[int, ...]
    slots: Tuple[int, int]

    def __post_init__(self) -> None:
        if not self.classes:
            raise ConfigError(f"task {self.teacher_id} has an empty class subset", "tasks")
        if self.slots[1] - self.slots[0] != len(self.classes):
            raise DataFormatError(
                f"task {self.teacher_id}: slot range {self.slots} does not fit {len(self.classes)} classes"
            )

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def local_labels(self, labels: np.ndarray) -> np.ndarray:
        """Map union class ids to indices into this task's class tuple."""
        lookup = {c: i for i, c in enumerate(self.classes)}
        try:
            return np.array([lookup[int(y)] for y in labels], dtype=np.int64)
        except KeyError as e:
            raise DataFormatError(f"label {e.args[0]} is outside task {self.teacher_id}") from None

    def to_dict(self) -> Dict[str, Any]:
        return {"teacher_id": self.teacher_id, "classes": list(self.classes), "slots": list(self.slots)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TaskSpec":
        return cls(str(data["teacher_id"]), tuple(int(c) for c in data["classes"]), tuple(data["slots"]))


def check_partition(tasks: Sequence[TaskSpec], num_classes: int) -> None:
    """Raise DataFormatError unless the class subsets are disjoint and cover every class."""
    seen: Dict[int, str] = {}
    for task in tasks:
        for c in task.classes:
            if not 0 <= c < num_classes:
                raise DataFormatError(f"task {task.teacher_id} references class {c} outside [0, {num_classes})")
            if c in seen:
                raise DataFormatError(f"class {c} belongs to both {seen[c]} and {task.teacher_id}")
            seen[c] = task.teacher_id
    if len(seen) != num_classes:
        missing = sorted(set(range(num_classes)) - set(seen))
        raise DataFormatError(f"classes {missing} are not covered by any task")


def tasks_from_groups(groups: Sequence[Sequence[int]], num_classes: int) -> List[TaskSpec]:
    """Explicit class subsets, with slots assigned contiguously in group order."""
    tasks, cursor = [], 0
    for i, group in enumerate(groups):
        classes = tuple(int(c) for c in group)
        tasks.append(TaskSpec(f"teacher{i}", classes, (cursor, cursor + len(classes))))
        cursor += len(classes)
    check_partition(tasks, num_classes)
    return tasks


def split_tasks(num_classes: int, teacher_count: int, seed: int) -> List[TaskSpec]:
    """
    Partition ``num_classes`` classes into ``teacher_count`` equal disjoint subsets.

    Classes are shuffled with ``seed``; each subset is kept sorted and slots
    are assigned contiguously in teacher order.
    """
    if teacher_count < 1 or num_classes < 1:
        raise ConfigError(
            f"invalid split of {num_classes} classes over {teacher_count} teachers", "tasks.teacher_count"
        )
    if num_classes % teacher_count:
        raise ConfigError(f"{teacher_count} teachers do not divide {num_classes} classes", "tasks.teacher_count")
    size = num_classes // teacher_count
    order = np.random.default_rng(seed).permutation(num_classes)
    groups = [sorted(int(c) for c in order[i * size : (i + 1) * size]) for i in range(teacher_count)]
    tasks = tasks_from_groups(groups, num_classes)
    logger.debug(f"split {num_classes} classes into {[t.classes for t in tasks]}")
    return tasks


class LabelSpace:
    """Bijection between union class ids and union slots induced by a task list."""

    def __init__(self, tasks: Sequence[TaskSpec], num_classes: int):
        check_partition(tasks, num_classes)
        self.tasks = list(tasks)
        self.num_classes = num_classes
        self.slot_of_class = np.empty(num_classes, dtype=np.int64)
        for task in tasks:
            for offset, c in enumerate(task.classes):
                self.slot_of_class[c] = task.slots[0] + offset
        self.class_of_slot = np.argsort(self.slot_of_class)

    @property
    def slot_ranges(self) -> List[Tuple[int, int]]:
        return [t.slots for t in self.tasks]

    def to_slots(self, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataFormatError(f"labels outside the union of {self.num_classes} classes")
        return self.slot_of_class[labels]

    def task_of_slot(self, slot: int) -> TaskSpec:
        for task in self.tasks:
            if task.slots[0] <= slot < task.slots[1]:
                return task
        raise DataFormatError(f"slot {slot} belongs to no task")
