"""
Amalgam CLI Module
==================

Single-config command line for data generation, pretraining, amalgamation,
baselines, evaluation, gradient checks and ablation sweeps.
"""

from .config import DataConfig, ModelConfig, RunConfig, TasksConfig, TrainConfig, load_config
from .main import main, main_cli

__all__ = [
    "DataConfig",
    "ModelConfig",
    "RunConfig",
    "TasksConfig",
    "TrainConfig",
    "load_config",
    "main",
    "main_cli",
]
