"""
Pipeline Steps
==============

The work behind each subcommand. Every step reads a RunConfig and writes its
artifacts under ``output_dir``::

    data/{train,test}/        persisted splits (data.bin + meta.json)
    data/tasks.json           task partition
    teachers/<teacher_id>/    frozen teacher checkpoints
    amalgamate/               metrics.jsonl, summary.json, student/, common/
    baseline-<method>/        same layout per baseline
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..core.errors import CheckpointNotFoundError, ConfigError
from ..data.datasets import META_NAME, Dataset, gen_blobs, gen_cross_dataset, load_dataset, save_dataset
from ..data.idx import load_idx
from ..data.tasks import LabelSpace, TaskSpec, split_tasks, tasks_from_groups
from ..losses.gradcases import GRADIENT_CASES, GradCheckResult, run_gradient_checks
from ..models.checkpoint import load_checkpoint
from ..models.layers import CommonSpaceStack, StudentModel, TeacherModel
from ..training.baselines import cfl_config, kd_config, supervised_baseline
from ..training.evaluation import (
    EvaluationReport,
    ensemble_predictor,
    evaluate_task,
    evaluate_union,
    student_predictor,
    teacher_predictor,
)
from ..training.student import AmalgamationResult, amalgamate_student
from ..training.teacher import pretrain_teacher
from .config import RunConfig

logger = logging.getLogger(__name__)

BASELINES = ("ensemble", "kd", "cfl", "supervised")
TASKS_NAME = "tasks.json"


@dataclass
class DataBundle:
    train: Dataset
    test: Dataset
    tasks: List[TaskSpec]
    label_space: LabelSpace

    @property
    def num_classes(self) -> int:
        return self.label_space.num_classes


def _require(value: Optional[str], key: str) -> str:
    if not value:
        raise ConfigError("required by the idx generator", key)
    return value


def build_data(config: RunConfig) -> DataBundle:
    """Generate or load the splits described by ``config.data`` and partition the classes."""
    data = config.data
    groups = None
    if data.generator == "idx":
        train = load_idx(
            _require(data.idx_train_images, "data.idx_train_images"), data.idx_train_labels, data.num_classes, "train"
        )
        test = load_idx(
            _require(data.idx_test_images, "data.idx_test_images"),
            _require(data.idx_test_labels, "data.idx_test_labels"),
            data.num_classes,
            "test",
        )
        if train.labels is None:
            raise ConfigError("teachers need labeled training rows", "data.idx_train_labels")
    elif data.scenario == "cross-dataset":
        train, test, groups = gen_cross_dataset(
            data.dataset_classes, data.dim, data.per_class, data.separation, data.seed, data.noise
        )
    else:
        train, test = gen_blobs(data.num_classes, data.dim, data.per_class, data.separation, data.seed, data.noise)

    num_classes = train.num_classes
    if groups is not None:
        tasks = tasks_from_groups(groups, num_classes)
    elif config.tasks.subsets:
        tasks = tasks_from_groups(config.tasks.subsets, num_classes)
    else:
        tasks = split_tasks(num_classes, config.tasks.teacher_count, config.tasks.seed)
    return DataBundle(train, test, tasks, LabelSpace(tasks, num_classes))


def data_dir(config: RunConfig) -> Path:
    return config.output_path / "data"


def save_data(bundle: DataBundle, directory: Path) -> None:
    save_dataset(bundle.train, directory / "train")
    save_dataset(bundle.test, directory / "test")
    (directory / TASKS_NAME).write_text(json.dumps([t.to_dict() for t in bundle.tasks], indent=2))


def prepare_data(config: RunConfig) -> DataBundle:
    """Persisted splits when ``gen-data`` has run, otherwise a deterministic regeneration."""
    directory = data_dir(config)
    persisted = all((directory / split / META_NAME).is_file() for split in ("train", "test"))
    if persisted and (directory / TASKS_NAME).is_file():
        train, test = load_dataset(directory / "train"), load_dataset(directory / "test")
        tasks = [TaskSpec.from_dict(t) for t in json.loads((directory / TASKS_NAME).read_text())]
        logger.info(f"using persisted dataset in {directory}")
        return DataBundle(train, test, tasks, LabelSpace(tasks, train.num_classes))
    return build_data(config)


def gen_data(config: RunConfig) -> DataBundle:
    bundle = build_data(config)
    save_data(bundle, data_dir(config))
    logger.info(
        f"generated {len(bundle.train)} train and {len(bundle.test)} test rows over {bundle.num_classes} classes"
    )
    return bundle


def teacher_dir(config: RunConfig, task: TaskSpec) -> Path:
    return config.output_path / "teachers" / task.teacher_id


def _task(bundle: DataBundle, index: int) -> TaskSpec:
    if not 0 <= index < len(bundle.tasks):
        raise ConfigError(f"task index {index} outside [0, {len(bundle.tasks)})", "tasks")
    return bundle.tasks[index]


def pretrain(config: RunConfig, task_index: int, bundle: Optional[DataBundle] = None) -> Dict[str, Any]:
    """Pretrain and checkpoint the teacher of one task; returns its evaluation row."""
    bundle = bundle or prepare_data(config)
    task = _task(bundle, task_index)
    widths = config.model.widths_for(task_index, len(bundle.tasks))
    teacher = pretrain_teacher(task, bundle.train, config.pretraining(), widths, teacher_dir(config, task))
    return teacher_report(teacher, task, bundle)


def pretrain_all(config: RunConfig, bundle: DataBundle, missing_only: bool = True) -> List[TeacherModel]:
    teachers = []
    for index, task in enumerate(bundle.tasks):
        path = teacher_dir(config, task)
        if missing_only and (path / "manifest.json").is_file():
            teachers.append(load_checkpoint(path))
            continue
        pretrain(config, index, bundle)
        teachers.append(load_checkpoint(path))
    return teachers


def load_teachers(config: RunConfig, bundle: DataBundle) -> List[TeacherModel]:
    """Load every task's teacher checkpoint; a missing one raises CheckpointNotFoundError."""
    teachers = []
    for task in bundle.tasks:
        path = teacher_dir(config, task)
        if not (path / "manifest.json").is_file():
            raise CheckpointNotFoundError(f"teacher {task.teacher_id} has no checkpoint at {path}; run pretrain first")
        teacher = load_checkpoint(path)
        if not isinstance(teacher, TeacherModel):
            raise CheckpointNotFoundError(f"{path} does not hold a teacher checkpoint")
        teachers.append(teacher)
    return teachers


def teacher_report(teacher: TeacherModel, task: TaskSpec, bundle: DataBundle) -> Dict[str, Any]:
    union = evaluate_union(teacher_predictor(teacher, bundle.num_classes), bundle.test, bundle.label_space)
    return {
        "method": teacher.model_id,
        "acc_own_task": evaluate_task(teacher, bundle.test, task),
        **union.to_dict(),
    }


def run_amalgamation(
    config: RunConfig,
    bundle: DataBundle,
    teachers: List[TeacherModel],
    method: str = "CKA",
    output_dir: Optional[Union[str, Path]] = None,
) -> AmalgamationResult:
    settings = config.amalgamation()
    if method == "KD":
        settings = kd_config(settings)
    elif method == "CFL":
        settings = cfl_config(settings)
    return amalgamate_student(
        teachers,
        bundle.train.unlabeled(),
        settings,
        config.model.student_widths,
        method,
        bundle.test,
        bundle.label_space,
        output_dir,
        config.model.projection_dim,
    )


def amalgamate(config: RunConfig) -> AmalgamationResult:
    bundle = prepare_data(config)
    teachers = load_teachers(config, bundle)
    return run_amalgamation(config, bundle, teachers, "CKA", config.output_path / "amalgamate")


def _write_report(directory: Path, payload: Dict[str, Any]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def baseline(config: RunConfig, method: str) -> Dict[str, Any]:
    """Run one reference method and return its evaluation row."""
    if method not in BASELINES:
        raise ConfigError(f"unknown baseline {method!r}; expected one of {list(BASELINES)}", "method")
    bundle = prepare_data(config)
    directory = config.output_path / f"baseline-{method}"

    if method == "supervised":
        student = supervised_baseline(
            bundle.train, bundle.label_space, config.pretraining(), config.model.student_widths, directory / "student"
        )
        report = evaluate_union(student_predictor(student), bundle.test, bundle.label_space).to_dict()
        row = {"method": "Supervised", **report}
        _write_report(directory, row)
        return row

    teachers = load_teachers(config, bundle)
    if method == "ensemble":
        report = evaluate_union(ensemble_predictor(teachers, bundle.num_classes), bundle.test, bundle.label_space)
        row = {"method": "Ensemble", **report.to_dict()}
        _write_report(directory, row)
        return row

    result = run_amalgamation(config, bundle, teachers, method.upper(), directory)
    final = result.metrics.final
    return {"method": method.upper(), "acc_union": final.acc_union, "acc_tasks": final.acc_tasks}


def evaluate(config: RunConfig, checkpoint: Union[str, Path]) -> Dict[str, Any]:
    """Evaluate a teacher (zero-padded) or student checkpoint on the test split."""
    bundle = prepare_data(config)
    model = load_checkpoint(checkpoint)
    if isinstance(model, CommonSpaceStack):
        raise ConfigError("common-space checkpoints carry no classifier", "ckpt")
    if isinstance(model, TeacherModel):
        matches = [t for t in bundle.tasks if t.slots == model.slots and t.teacher_id == model.model_id]
        if not matches:
            raise ConfigError(f"teacher {model.model_id} does not match any task of this run", "ckpt")
        return teacher_report(model, matches[0], bundle)
    if not isinstance(model, StudentModel):
        raise ConfigError(f"unsupported checkpoint kind {type(model).__name__}", "ckpt")
    report: EvaluationReport = evaluate_union(student_predictor(model), bundle.test, bundle.label_space)
    return {"method": "student", **report.to_dict()}


def gradcheck(op: str = "all", configurations: int = 10, seed: int = 0) -> List[GradCheckResult]:
    names = list(GRADIENT_CASES) if op == "all" else [op]
    unknown = [n for n in names if n not in GRADIENT_CASES]
    if unknown:
        raise ConfigError(f"unknown loss {unknown[0]!r}; expected one of {sorted(GRADIENT_CASES)} or all", "op")
    return run_gradient_checks(names, configurations=configurations, seed=seed)
