"""
Models module imports
"""

from .checkpoint import FORMAT_VERSION, load_checkpoint, read_manifest, save_checkpoint
from .layers import (
    ADAPTER_CHANNELS,
    COMMON_DIM,
    STUDENT_ID,
    ClassifierHead,
    CommonSpaceSpec,
    CommonSpaceStack,
    Linear,
    Mlp,
    MlpEncoder,
    ModelSpec,
    Module,
    ProjectionHead,
    StudentModel,
    TeacherModel,
    init_params,
    iter_named,
    parameter_digest,
)
from .optim import OptimizerState, adam_step, clip_grad_norm, cosine_lr, global_grad_norm

__all__ = [
    "FORMAT_VERSION",
    "load_checkpoint",
    "read_manifest",
    "save_checkpoint",
    "ADAPTER_CHANNELS",
    "COMMON_DIM",
    "STUDENT_ID",
    "ClassifierHead",
    "CommonSpaceSpec",
    "CommonSpaceStack",
    "Linear",
    "Mlp",
    "MlpEncoder",
    "ModelSpec",
    "Module",
    "ProjectionHead",
    "StudentModel",
    "TeacherModel",
    "init_params",
    "iter_named",
    "parameter_digest",
    "OptimizerState",
    "adam_step",
    "clip_grad_norm",
    "cosine_lr",
    "global_grad_norm",
]
