"""
Evaluation
==========

Top-1 accuracy over the union label space for students, zero-padded single
teachers and the concatenated-logit ensemble.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from ..core.errors import DataFormatError
from ..core.tensor import Tensor, no_grad, softmax
from ..data.datasets import Dataset
from ..data.tasks import LabelSpace, TaskSpec
from ..losses.distill import validate_slot_ranges
from ..models.layers import StudentModel, TeacherModel

logger = logging.getLogger(__name__)

EVAL_BATCH = 512

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass
class EvaluationReport:
    accuracy: float
    task_accuracy: List[float] = field(default_factory=list)
    count: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {"acc_union": self.accuracy, "acc_tasks": list(self.task_accuracy), "count": self.count}


def _batched(predict: Predictor, samples: np.ndarray) -> np.ndarray:
    outputs = [predict(samples[i : i + EVAL_BATCH]) for i in range(0, len(samples), EVAL_BATCH)]
    return np.concatenate(outputs) if outputs else np.zeros((0, 0))


def student_predictor(student: StudentModel) -> Predictor:
    def predict(x: np.ndarray) -> np.ndarray:
        with no_grad():
            return student.logits(Tensor(x)).values

    return predict


def teacher_predictor(teacher: TeacherModel, num_classes: int) -> Predictor:
    """Teacher probabilities in its own slots and zero everywhere else."""

    def predict(x: np.ndarray) -> np.ndarray:
        with no_grad():
            probs = softmax(teacher.logits(Tensor(x))).values
        padded = np.zeros((len(x), num_classes))
        start, stop = teacher.slots
        padded[:, start:stop] = probs
        return padded

    return predict


def ensemble_predict(teachers: Sequence[TeacherModel], x: np.ndarray, num_classes: int) -> np.ndarray:
    """
    Raw teacher logits concatenated into their union slots.

    Placement follows each teacher's slot range, not its list position.
    """
    validate_slot_ranges([t.slots for t in teachers], num_classes)
    union = np.zeros((len(x), num_classes))
    with no_grad():
        for teacher in teachers:
            start, stop = teacher.slots
            union[:, start:stop] = teacher.logits(Tensor(x)).values
    return union


def ensemble_predictor(teachers: Sequence[TeacherModel], num_classes: int) -> Predictor:
    return lambda x: ensemble_predict(teachers, x, num_classes)


def evaluate_union(predict: Predictor, dataset: Dataset, label_space: LabelSpace) -> EvaluationReport:
    """
    Top-1 accuracy by argmax over union slots, overall and per task.

    Args:
        predict: Maps ``N x D`` samples to ``N x C`` union-slot scores
        dataset: Labeled test split with union class ids
        label_space: Class-to-slot mapping of the run's tasks

    Raises:
        DataFormatError: a label lies outside the union
    """
    labels = dataset.require_labels()
    truth = label_space.to_slots(labels)
    scores = _batched(predict, dataset.samples)
    if len(truth) == 0:
        return EvaluationReport(accuracy=0.0, task_accuracy=[0.0] * len(label_space.tasks), count=0)
    expected = (len(truth), label_space.num_classes)
    if scores.shape != expected:
        raise DataFormatError(f"predictor returned shape {scores.shape}, expected {expected}")
    correct = np.argmax(scores, axis=1) == truth
    per_task = []
    for task in label_space.tasks:
        mask = np.isin(labels, task.classes)
        per_task.append(float(correct[mask].mean()) if mask.any() else 0.0)
    return EvaluationReport(accuracy=float(correct.mean()), task_accuracy=per_task, count=len(truth))


def evaluate_task(teacher: TeacherModel, dataset: Dataset, task: TaskSpec) -> float:
    """Accuracy of a teacher on the rows of its own classes, argmax within its slots."""
    own = dataset.restrict(task.classes)
    if len(own) == 0:
        return 0.0
    local = task.local_labels(own.labels)
    with no_grad():
        logits = _batched(lambda x: teacher.logits(Tensor(x)).values, own.samples)
    return float(np.mean(np.argmax(logits, axis=1) == local))
