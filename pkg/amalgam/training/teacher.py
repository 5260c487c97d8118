"""
Teacher Pretraining
===================

Supervised cross-entropy training of a network on local class indices,
used for teachers and for the supervised reference student.
"""

import logging
from collections import OrderedDict
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..core.errors import ConfigError, NonFiniteError
from ..core.tensor import Tensor, log_softmax
from ..data.batching import make_batches
from ..data.datasets import Dataset
from ..data.tasks import TaskSpec
from ..models.checkpoint import save_checkpoint
from ..models.layers import ModelSpec, TeacherModel, init_params
from ..models.optim import OptimizerState, adam_step, cosine_lr
from .config import PretrainConfig

logger = logging.getLogger(__name__)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``."""
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(targets)), targets] = 1.0
    return -(Tensor(onehot) * log_softmax(logits)).sum(axis=1).mean()


def fit_classifier(network, dataset: Dataset, targets: np.ndarray, config: PretrainConfig) -> List[float]:
    """
    Train ``network.logits`` against ``targets`` with Adam and cosine decay.

    Args:
        network: Teacher or student network
        dataset: Training rows
        targets: Output index per row of ``dataset``
        config: Optimizer settings

    Returns:
        Mean training loss per epoch
    """
    params = OrderedDict((n, t) for n, t in network.named_parameters().items() if t.requires_grad)
    state = OptimizerState(lr=config.lr, weight_decay=config.weight_decay)
    batch_size = min(config.batch_size, len(dataset))
    if batch_size < 2:
        raise ConfigError(f"need at least 2 training rows, got {len(dataset)}", "data.per_class")

    history = []
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.epochs)
        losses = []
        for batch in make_batches(dataset, batch_size, seed=config.seed, epoch=epoch):
            network.zero_grad()
            loss = cross_entropy(network.logits(Tensor(batch.samples)), targets[batch.indices])
            if loss.requires_grad:
                loss.backward()
            adam_step(state, params, lr=lr)
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        if not np.isfinite(history[-1]):
            raise NonFiniteError(f"cross-entropy diverged in epoch {epoch}", component="cross-entropy")
        logger.debug(f"{network.model_id} epoch {epoch}: loss {history[-1]:.4f} lr {lr:.2e}")
    return history


def teacher_spec(task: TaskSpec, input_dim: int, widths: Sequence[int]) -> ModelSpec:
    """Teacher architecture: ``widths`` lists the hidden widths followed by the feature width."""
    widths = [int(w) for w in widths]
    if not widths:
        raise ConfigError("teacher widths must not be empty", "model.teacher_widths")
    return ModelSpec(
        model_id=task.teacher_id,
        input_dim=input_dim,
        hidden=tuple(widths[:-1]),
        feature_dim=widths[-1],
        slots=task.slots,
        kind="teacher",
    )


def pretrain_teacher(
    task: TaskSpec,
    dataset: Dataset,
    config: PretrainConfig,
    widths: Sequence[int] = (128, 128),
    checkpoint_dir: Optional[Union[str, Path]] = None,
) -> TeacherModel:
    """
    Train a teacher on its task's classes only and freeze it.

    Args:
        task: Class subset and slot range
        dataset: Labeled training rows; rows outside the task are dropped
        config: Optimizer settings
        widths: Hidden widths followed by the feature width
        checkpoint_dir: When given, the frozen teacher is saved there

    Returns:
        The frozen teacher
    """
    if not task.classes:
        raise ConfigError(f"task {task.teacher_id} has no classes", "tasks")
    own = dataset.restrict(task.classes)
    if len(own) == 0:
        raise ConfigError(f"no training rows for task {task.teacher_id}", "tasks")
    if task.num_classes == 1:
        logger.warning(f"task {task.teacher_id} has a single class; its teacher is trivially correct")

    teacher = init_params(teacher_spec(task, dataset.input_dim, widths), seed=config.seed)
    history = fit_classifier(teacher, own, task.local_labels(own.labels), config)
    teacher.freeze()
    logger.info(
        f"pretrained {task.teacher_id} on classes {list(task.classes)}: final loss {history[-1]:.4f}"
    )
    if checkpoint_dir is not None:
        save_checkpoint(teacher, checkpoint_dir)
    return teacher
