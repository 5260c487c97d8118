"""
Baselines
=========

Reference methods sharing the amalgamation trainer: vanilla knowledge
distillation from concatenated logits, common-feature learning without
contrast, and a supervised student trained on ground-truth union labels.
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence, Union

from ..data.datasets import Dataset
from ..data.tasks import LabelSpace
from ..losses.distill import TargetMode
from ..models.checkpoint import save_checkpoint
from ..models.layers import StudentModel, TeacherModel, init_params
from .config import AmalgamationConfig, PretrainConfig
from .student import AmalgamationResult, amalgamate_student, student_spec
from .teacher import fit_classifier

logger = logging.getLogger(__name__)


def kd_config(config: AmalgamationConfig) -> AmalgamationConfig:
    """Only the KL term, against the softmax of concatenated teacher logits."""
    kd = config.with_weights(lambda_intra=0.0, lambda_inter=0.0, lambda_align=0.0, lambda_std=1.0)
    return replace(kd, target_mode=TargetMode.CONCATENATED_LOGITS.value)


def cfl_config(config: AmalgamationConfig) -> AmalgamationConfig:
    """Alignment and soft targets only."""
    return config.with_weights(lambda_intra=0.0, lambda_inter=0.0)


def vanilla_kd_baseline(
    teachers: Sequence[TeacherModel],
    pool: Dataset,
    config: AmalgamationConfig,
    widths: Sequence[int] = (128, 128),
    eval_dataset: Optional[Dataset] = None,
    label_space: Optional[LabelSpace] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> AmalgamationResult:
    logger.info("training vanilla KD baseline")
    return amalgamate_student(
        teachers, pool, kd_config(config), widths, "KD", eval_dataset, label_space, output_dir
    )


def cfl_baseline(
    teachers: Sequence[TeacherModel],
    pool: Dataset,
    config: AmalgamationConfig,
    widths: Sequence[int] = (128, 128),
    eval_dataset: Optional[Dataset] = None,
    label_space: Optional[LabelSpace] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> AmalgamationResult:
    logger.info("training common-feature-learning baseline")
    return amalgamate_student(
        teachers, pool, cfl_config(config), widths, "CFL", eval_dataset, label_space, output_dir
    )


def supervised_baseline(
    train: Dataset,
    label_space: LabelSpace,
    config: PretrainConfig,
    widths: Sequence[int] = (128, 128),
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> StudentModel:
    """
    Student architecture trained with cross-entropy on ground-truth union labels.

    An upper reference for evaluation only; it sees labels no amalgamation
    method has access to.
    """
    student = init_params(student_spec(train.input_dim, label_space.num_classes, widths), seed=config.seed)
    history = fit_classifier(student, train, label_space.to_slots(train.require_labels()), config)
    logger.info(f"supervised student trained: final loss {history[-1]:.4f}")
    if checkpoint_dir is not None:
        save_checkpoint(student, checkpoint_dir)
    return student
