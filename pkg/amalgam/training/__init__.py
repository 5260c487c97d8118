"""
Training module imports
"""

from .baselines import cfl_baseline, cfl_config, kd_config, supervised_baseline, vanilla_kd_baseline
from .config import AmalgamationConfig, PretrainConfig
from .evaluation import (
    EvaluationReport,
    ensemble_predict,
    ensemble_predictor,
    evaluate_task,
    evaluate_union,
    student_predictor,
    teacher_predictor,
)
from .metrics import EpochRecord, MetricsWriter, RunMetrics, read_metrics, write_summary
from .student import AmalgamationResult, AmalgamationTrainer, amalgamate_student, student_spec
from .teacher import cross_entropy, fit_classifier, pretrain_teacher, teacher_spec

__all__ = [
    "cfl_baseline",
    "cfl_config",
    "kd_config",
    "supervised_baseline",
    "vanilla_kd_baseline",
    "AmalgamationConfig",
    "PretrainConfig",
    "EvaluationReport",
    "ensemble_predict",
    "ensemble_predictor",
    "evaluate_task",
    "evaluate_union",
    "student_predictor",
    "teacher_predictor",
    "EpochRecord",
    "MetricsWriter",
    "RunMetrics",
    "read_metrics",
    "write_summary",
    "AmalgamationResult",
    "AmalgamationTrainer",
    "amalgamate_student",
    "student_spec",
    "cross_entropy",
    "fit_classifier",
    "pretrain_teacher",
    "teacher_spec",
]
