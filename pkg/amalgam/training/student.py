"""
Student Amalgamation
====================

Trains one student over the union of the teachers' label sets from an
unlabeled pool. Each batch combines:

* intra-model contrast between two augmented student views,
* inter-model contrast between the student's and each teacher's transport maps,
* MMD alignment in the common feature space reached through per-model adapters,
* soft-target distillation towards the teachers' union-space targets.
"""

import logging
import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.errors import AmalgamError, DegenerateInputError, NonFiniteError
from ..core.tensor import Tensor, no_grad, softmax
from ..data.augment import two_views
from ..data.batching import batch_count, make_batches
from ..data.datasets import Dataset
from ..data.tasks import LabelSpace
from ..losses.alignment import alignment_loss
from ..losses.contrastive import info_nce_loss, intra_margin_loss
from ..losses.distill import (
    TargetMode,
    TeacherBlock,
    concatenated_logit_target,
    distill_to_target,
    renormalized_target,
    validate_slot_ranges,
)
from ..losses.objective import COMPONENTS, LossBreakdown, total_loss
from ..losses.transport import gw_discrepancy, inter_contrast_loss, pairwise_distance_matrix, transport_map
from ..models.checkpoint import save_checkpoint
from ..models.layers import (
    STUDENT_ID,
    CommonSpaceStack,
    ModelSpec,
    StudentModel,
    TeacherModel,
    init_params,
    iter_named,
    parameter_digest,
)
from ..models.optim import OptimizerState, adam_step, clip_grad_norm, cosine_lr
from .config import AmalgamationConfig
from .evaluation import evaluate_union, student_predictor
from .metrics import EpochRecord, MetricsWriter, RunMetrics, write_summary

logger = logging.getLogger(__name__)


@dataclass
class TeacherOutputs:
    features: List[Tensor]
    logits: List[Tensor]


@dataclass
class AmalgamationResult:
    student: StudentModel
    common: CommonSpaceStack
    metrics: RunMetrics


def student_spec(input_dim: int, num_classes: int, widths: Sequence[int], projection_dim: int = 64) -> ModelSpec:
    """Student architecture over all ``num_classes`` union slots."""
    widths = [int(w) for w in widths]
    return ModelSpec(
        model_id=STUDENT_ID,
        input_dim=input_dim,
        hidden=tuple(widths[:-1]),
        feature_dim=widths[-1],
        slots=(0, num_classes),
        kind="student",
        projection_hidden=widths[-1],
        projection_dim=projection_dim,
    )


class AmalgamationTrainer:
    """
    Owns the student, the common-space stack and the optimizer state for one run.

    Args:
        teachers: Frozen teachers with disjoint slot ranges covering the union
        student: Student network over all union slots
        config: Loss weights and optimization settings
        common: Common-space stack; built from the models' feature widths when omitted
    """

    def __init__(
        self,
        teachers: Sequence[TeacherModel],
        student: StudentModel,
        config: AmalgamationConfig,
        common: Optional[CommonSpaceStack] = None,
    ):
        if not teachers:
            raise DegenerateInputError("amalgamation needs at least one teacher")
        self.teachers = list(teachers)
        self.num_classes = student.slots[1]
        validate_slot_ranges([t.slots for t in self.teachers], self.num_classes)
        for teacher in self.teachers:
            if not teacher.frozen:
                logger.warning(f"teacher {teacher.model_id} was not frozen; freezing it")
                teacher.freeze()
        self.student = student
        self.config = config
        feature_dims = {STUDENT_ID: student.feature_dim}
        feature_dims.update({t.model_id: t.feature_dim for t in self.teachers})
        self.common = common or CommonSpaceStack.create(
            feature_dims, seed=config.seed + 1, adapter_channels=config.adapter_channels, common_dim=config.common_dim
        )
        if not config.train_teacher_adapters:
            for teacher in self.teachers:
                self.common.freeze_adapter(teacher.model_id)
        self.state = OptimizerState(lr=config.lr, weight_decay=config.weight_decay)

    @property
    def trainable(self) -> "OrderedDict[str, Tensor]":
        """Student parameters and every common-space parameter not frozen."""
        modules = {"student": self.student, "common": self.common}
        return OrderedDict((name, tensor) for name, tensor in iter_named(modules) if tensor.requires_grad)

    def teacher_outputs(self, samples: np.ndarray) -> TeacherOutputs:
        features, logits = [], []
        with no_grad():
            for teacher in self.teachers:
                h = teacher.encode(Tensor(samples))
                features.append(h)
                logits.append(teacher.classify(h))
        return TeacherOutputs(features, logits)

    def soft_target(self, outputs: TeacherOutputs) -> np.ndarray:
        weights = self.config.weights
        slots = [t.slots for t in self.teachers]
        if self.config.target_mode == TargetMode.CONCATENATED_LOGITS.value:
            blocks = [TeacherBlock(z.values, s) for z, s in zip(outputs.logits, slots)]
            return concatenated_logit_target(blocks, self.num_classes, weights.distill_temperature)
        blocks = [
            TeacherBlock(softmax(z.scale(1.0 / weights.distill_temperature)).values, s)
            for z, s in zip(outputs.logits, slots)
        ]
        return renormalized_target(blocks, self.num_classes)

    def batch_losses(self, samples: np.ndarray, epoch: int, index: int) -> LossBreakdown:
        """
        Compute every loss component with a non-zero weight for one batch.

        Raises:
            NonFiniteError: naming the component and ``index``
        """
        config, weights = self.config, self.config.weights
        view1, view2 = two_views(config.augmentation, samples, epoch, index)
        teacher_input = samples if config.teacher_view == "clean" else view1

        h1 = self.student.encode(Tensor(view1))
        outputs = self.teacher_outputs(teacher_input)

        def intra() -> Tensor:
            z1 = self.student.project(h1)
            z2 = self.student.project(self.student.encode(Tensor(view2)))
            if config.intra_loss == "infonce":
                return info_nce_loss(z1, z2, weights.temperature)
            return intra_margin_loss(z1, z2, weights.margin, config.reduction)

        def inter() -> Tensor:
            student_d = pairwise_distance_matrix(h1, config.inter_metric, config.spatial_channels)
            pi_student = transport_map(student_d, config.inter_metric, STUDENT_ID)
            pi_teachers = [
                transport_map(
                    pairwise_distance_matrix(f, config.inter_metric, config.spatial_channels),
                    config.inter_metric,
                    t.model_id,
                )
                for f, t in zip(outputs.features, self.teachers)
            ]
            return inter_contrast_loss(pi_student, pi_teachers, config.reduction)

        def align() -> Tensor:
            common_student = self.common.to_common(STUDENT_ID, h1)
            common_teachers = [self.common.to_common(t.model_id, f) for f, t in zip(outputs.features, self.teachers)]
            return alignment_loss(common_student, common_teachers)

        def std() -> Tensor:
            return distill_to_target(
                self.student.classify(h1),
                self.soft_target(outputs),
                weights.distill_temperature,
                config.kl_direction,
            )

        builders: Dict[str, Callable[[], Tensor]] = {"intra": intra, "inter": inter, "align": align, "std": std}
        components: Dict[str, Optional[Tensor]] = {}
        for name in COMPONENTS:
            if weights.weight_of(name) == 0.0:
                components[name] = None
                continue
            try:
                components[name] = builders[name]()
            except NonFiniteError as e:
                logger.error(f"loss component {name} is not finite at epoch {epoch}, batch {index}")
                raise NonFiniteError(
                    f"loss component {name} is not finite at batch {index}: {e}", component=name, batch_index=index
                ) from e
        try:
            return total_loss(components, weights)
        except NonFiniteError as e:
            logger.error(f"loss component {e.component} is not finite at epoch {epoch}, batch {index}")
            raise NonFiniteError(str(e), component=e.component, batch_index=index) from e

    def train_step(self, samples: np.ndarray, epoch: int, index: int, lr: float) -> LossBreakdown:
        params = self.trainable
        for tensor in params.values():
            tensor.zero_grad()
        breakdown = self.batch_losses(samples, epoch, index)
        if breakdown.objective is not None and breakdown.objective.requires_grad:
            breakdown.objective.backward()
        if self.config.clip_grad_norm > 0.0:
            clip_grad_norm(params, self.config.clip_grad_norm)
        adam_step(self.state, params, lr=lr)
        return breakdown

    def gw_diagnostic(self, samples: np.ndarray) -> float:
        """Distance discrepancy between student and first-teacher features under the identity coupling."""
        with no_grad():
            student_d = pairwise_distance_matrix(self.student.encode(Tensor(samples)), "euclidean")
            teacher_d = pairwise_distance_matrix(self.teachers[0].encode(Tensor(samples)), "euclidean")
        batch = len(samples)
        return gw_discrepancy(student_d, teacher_d, np.eye(batch) / batch, q=self.config.weights.gw_exponent)

    def fit(
        self,
        pool: Dataset,
        method: str = "CKA",
        eval_dataset: Optional[Dataset] = None,
        label_space: Optional[LabelSpace] = None,
        metrics_path: Optional[Union[str, Path]] = None,
    ) -> RunMetrics:
        """
        Run ``config.epochs`` epochs over the unlabeled ``pool``.

        Returns:
            RunMetrics with one record per epoch
        """
        config = self.config
        pool = pool.unlabeled()
        if batch_count(len(pool), config.batch_size) == 0:
            raise DegenerateInputError(f"pool of {len(pool)} rows yields no batch of {config.batch_size}")
        metrics = RunMetrics(method=method, seed=config.seed, weights=config.weights)
        metrics.teacher_digests_before = {t.model_id: parameter_digest(t) for t in self.teachers}
        writer = MetricsWriter(metrics_path) if metrics_path is not None else None

        for epoch in range(config.epochs):
            started = time.perf_counter()
            lr = cosine_lr(config.lr, epoch, config.epochs)
            sums = dict.fromkeys(COMPONENTS + ("total",), 0.0)
            batches = 0
            gw_value = None
            for batch in make_batches(pool, config.batch_size, seed=config.seed, epoch=epoch):
                if config.log_gw_diagnostic and batch.index == 0:
                    gw_value = self.gw_diagnostic(batch.samples)
                breakdown = self.train_step(batch.samples, epoch, batch.index, lr)
                for key in sums:
                    sums[key] += getattr(breakdown, key)
                batches += 1
                logger.debug(f"epoch {epoch} batch {batch.index}: {breakdown.to_dict()}")

            losses = LossBreakdown(**{k: v / batches for k, v in sums.items()})
            record = EpochRecord(epoch=epoch, losses=losses, lr=lr, gw_diagnostic=gw_value)
            if eval_dataset is not None and label_space is not None:
                report = evaluate_union(student_predictor(self.student), eval_dataset, label_space)
                record.acc_union, record.acc_tasks = report.accuracy, report.task_accuracy
            record.wall_clock = time.perf_counter() - started
            metrics.append(record)
            if writer is not None:
                writer.write(record)
            logger.info(
                f"{method} epoch {epoch + 1}/{config.epochs}: loss {losses.total:.4f}"
                + (f", union acc {record.acc_union:.4f}" if record.acc_union is not None else "")
            )

        metrics.teacher_digests_after = {t.model_id: parameter_digest(t) for t in self.teachers}
        if not metrics.teachers_unchanged():
            raise AmalgamError("teacher parameters changed during amalgamation")
        return metrics


def amalgamate_student(
    teachers: Sequence[TeacherModel],
    pool: Dataset,
    config: AmalgamationConfig,
    widths: Sequence[int] = (128, 128),
    method: str = "CKA",
    eval_dataset: Optional[Dataset] = None,
    label_space: Optional[LabelSpace] = None,
    output_dir: Optional[Union[str, Path]] = None,
    projection_dim: int = 64,
) -> AmalgamationResult:
    """
    Train a fresh student from the teachers on an unlabeled pool.

    Args:
        teachers: Frozen teachers
        pool: Amalgamation pool; labels, if any, are discarded
        config: Run settings
        widths: Student hidden widths followed by its feature width
        method: Label recorded in the metrics
        eval_dataset: Labeled test split evaluated after every epoch
        label_space: Class-to-slot mapping for evaluation
        output_dir: When given, receives ``metrics.jsonl``, ``summary.json``
            and the ``student`` and ``common`` checkpoints
        projection_dim: Output width of the student projection head

    Returns:
        AmalgamationResult with the student, the common-space stack and RunMetrics
    """
    num_classes = max(t.slots[1] for t in teachers) if teachers else 0
    student = init_params(student_spec(pool.input_dim, num_classes, widths, projection_dim), seed=config.seed)
    trainer = AmalgamationTrainer(teachers, student, config)
    output_dir = Path(output_dir) if output_dir is not None else None
    metrics = trainer.fit(
        pool,
        method=method,
        eval_dataset=eval_dataset,
        label_space=label_space,
        metrics_path=output_dir / "metrics.jsonl" if output_dir else None,
    )
    if output_dir is not None:
        save_checkpoint(student, output_dir / "student")
        save_checkpoint(trainer.common, output_dir / "common")
        write_summary(metrics, output_dir / "summary.json")
    return AmalgamationResult(student=student, common=trainer.common, metrics=metrics)
