"""
Shared fixtures: a small blob problem, its task split and a pair of
pretrained teachers reused across the training and CLI tests.
"""

import numpy as np
import pytest

from amalgam.cli.config import load_config
from amalgam.data.datasets import gen_blobs
from amalgam.data.tasks import LabelSpace, split_tasks
from amalgam.training.config import AmalgamationConfig, PretrainConfig
from amalgam.training.teacher import pretrain_teacher

NUM_CLASSES = 4
DIM = 8


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def blobs():
    return gen_blobs(NUM_CLASSES, DIM, per_class=40, separation=10.0, seed=0)


@pytest.fixture(scope="session")
def tasks():
    return split_tasks(NUM_CLASSES, teacher_count=2, seed=0)


@pytest.fixture(scope="session")
def label_space(tasks):
    return LabelSpace(tasks, NUM_CLASSES)


@pytest.fixture(scope="session")
def pretrain_config():
    return PretrainConfig(lr=5e-3, batch_size=16, epochs=20, seed=0)


@pytest.fixture(scope="session")
def teachers(blobs, tasks, pretrain_config):
    train, _ = blobs
    widths = [(16, 16), (24, 24)]
    return [pretrain_teacher(task, train, pretrain_config, w) for task, w in zip(tasks, widths)]


@pytest.fixture
def small_config():
    """A few quick epochs on the blob pool."""
    return AmalgamationConfig(batch_size=16, epochs=2, seed=0, adapter_channels=16, common_dim=8)


TINY_OVERRIDES = [
    "data.num_classes=4",
    "data.dim=8",
    "data.per_class=30",
    "model.teacher_widths=[[16, 16]]",
    "model.student_widths=[16, 16]",
    "model.adapter_channels=16",
    "model.common_dim=8",
    "model.projection_dim=8",
    "train.batch_size=16",
    "train.epochs=2",
    "train.pretrain_epochs=5",
]


@pytest.fixture
def tiny_args(tmp_path):
    """Common CLI options that keep a full pipeline to a few seconds."""
    args = []
    for override in TINY_OVERRIDES:
        args += ["--set", override]
    return args + ["--output-dir", str(tmp_path / "run")]


@pytest.fixture
def tiny_config(tmp_path):
    return load_config(None, TINY_OVERRIDES, str(tmp_path / "run"))
