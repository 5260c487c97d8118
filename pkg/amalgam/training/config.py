"""
Training Configuration
======================

Settings for teacher pretraining and for the student amalgamation loop.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional

from ..core.errors import ConfigError
from ..data.augment import AugmentationPolicy
from ..losses.contrastive import REDUCTIONS
from ..losses.distill import KLDirection, TargetMode
from ..losses.objective import LossWeights
from ..losses.transport import DistanceMetric
from ..models.layers import ADAPTER_CHANNELS, COMMON_DIM

TEACHER_VIEWS = ("clean", "view1")
INTRA_LOSSES = ("margin", "infonce")


def _choice(value: str, allowed, key: str) -> str:
    allowed = tuple(getattr(a, "value", a) for a in allowed)
    if value not in allowed:
        raise ConfigError(f"must be one of {list(allowed)}, got {value!r}", key)
    return value


@dataclass
class PretrainConfig:
    """Supervised cross-entropy training of one network."""

    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"must be at least 1, got {self.epochs}", "pretrain_epochs")
        if self.batch_size < 2:
            raise ConfigError(f"must be at least 2, got {self.batch_size}", "batch_size")


@dataclass
class AmalgamationConfig:
    """
    Student training settings.

    Disabling the intra or inter contrast is expressed as a zero weight in
    ``weights``; the trainer then skips that component entirely.
    """

    weights: LossWeights = field(default_factory=LossWeights)
    inter_metric: str = DistanceMetric.EUCLIDEAN.value
    spatial_channels: Optional[int] = None
    reduction: str = "mean"
    kl_direction: str = KLDirection.STUDENT_FIRST.value
    target_mode: str = TargetMode.RENORMALIZED.value
    teacher_view: str = "clean"
    intra_loss: str = "margin"
    lr: float = 5e-4
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    augmentation: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    adapter_channels: int = ADAPTER_CHANNELS
    common_dim: int = COMMON_DIM
    clip_grad_norm: float = 0.0
    train_teacher_adapters: bool = True
    log_gw_diagnostic: bool = False

    def __post_init__(self) -> None:
        _choice(self.inter_metric, DistanceMetric, "train.inter_metric")
        _choice(self.reduction, REDUCTIONS, "train.reduction")
        _choice(self.kl_direction, KLDirection, "train.kl_direction")
        _choice(self.target_mode, TargetMode, "train.target_mode")
        _choice(self.teacher_view, TEACHER_VIEWS, "train.teacher_view")
        _choice(self.intra_loss, INTRA_LOSSES, "train.intra_loss")
        if self.epochs < 1:
            raise ConfigError(f"must be at least 1, got {self.epochs}", "train.epochs")
        if self.batch_size < 2:
            raise ConfigError(f"must be at least 2, got {self.batch_size}", "train.batch_size")
        if self.lr < 0.0 or self.weight_decay < 0.0:
            raise ConfigError("learning rate and weight decay must be non-negative", "train.lr")
        if self.clip_grad_norm < 0.0:
            raise ConfigError(f"must be non-negative, got {self.clip_grad_norm}", "train.clip_grad_norm")
        if self.spatial_channels is not None and (
            not isinstance(self.spatial_channels, int)
            or isinstance(self.spatial_channels, bool)
            or self.spatial_channels < 1
        ):
            raise ConfigError(f"must be a positive integer, got {self.spatial_channels!r}", "train.spatial_channels")
        if self.inter_metric == DistanceMetric.MMD_SPATIAL.value and not self.spatial_channels:
            raise ConfigError("the mmd-spatial metric needs spatial_channels", "train.spatial_channels")

    def with_weights(self, **changes: float) -> "AmalgamationConfig":
        """Copy with some loss weights replaced."""
        return replace(self, weights=replace(self.weights, **changes))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["weights"] = self.weights.to_dict()
        data["augmentation"] = self.augmentation.to_dict()
        return data
