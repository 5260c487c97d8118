"""
Run Configuration
=================

One declarative file drives every subcommand. Sections mirror the pipeline:
``data``, ``tasks``, ``model`` and ``train``, plus ``output_dir``.
"""

import json
import logging
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import yaml

from ..core.errors import ConfigError
from ..data.augment import AugmentationPolicy
from ..losses.objective import LossWeights
from ..training.config import AmalgamationConfig, PretrainConfig

logger = logging.getLogger(__name__)

RESOLVED_NAME = "resolved_config.json"


@dataclass
class DataConfig:
    """Where samples come from."""

    generator: str = "blobs"  # blobs, idx
    scenario: str = "standard"  # standard, cross-dataset
    num_classes: int = 8
    dim: int = 32
    per_class: int = 500
    separation: float = 10.0
    noise: float = 1.0
    seed: int = 0
    dataset_classes: List[int] = field(default_factory=lambda: [4, 4])
    idx_train_images: Optional[str] = None
    idx_train_labels: Optional[str] = None
    idx_test_images: Optional[str] = None
    idx_test_labels: Optional[str] = None


@dataclass
class TasksConfig:
    teacher_count: int = 2
    seed: int = 0
    subsets: Optional[List[List[int]]] = None


@dataclass
class ModelConfig:
    """Hidden widths followed by the feature width, per teacher and for the student."""

    teacher_widths: List[List[int]] = field(default_factory=lambda: [[64, 64], [128, 128]])
    student_widths: List[int] = field(default_factory=lambda: [128, 128])
    adapter_channels: int = 256
    common_dim: int = 128
    projection_dim: int = 64

    def widths_for(self, teacher_index: int, teacher_count: int) -> List[int]:
        if len(self.teacher_widths) == 1:
            return list(self.teacher_widths[0])
        if len(self.teacher_widths) != teacher_count:
            raise ConfigError(
                f"{len(self.teacher_widths)} width lists for {teacher_count} teachers", "model.teacher_widths"
            )
        return list(self.teacher_widths[teacher_index])


@dataclass
class TrainConfig:
    """Optimization and loss settings; ``alpha`` is the intra-model margin."""

    lr: float = 5e-4
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    alpha: float = 0.4
    lambda_intra: float = 1.0
    lambda_inter: float = 1.0
    lambda_align: float = 10.0
    lambda_std: float = 1.0
    temperature: float = 0.5
    distill_temperature: float = 1.0
    gw_exponent: float = 2.0
    inter_metric: str = "euclidean"
    spatial_channels: Optional[int] = None
    reduction: str = "mean"
    kl_direction: str = "student-first"
    target_mode: str = "renormalized"
    teacher_view: str = "clean"
    intra_loss: str = "margin"
    aug_noise: float = 0.5
    aug_mask_prob: float = 0.05
    aug_scale_jitter: float = 0.1
    clip_grad_norm: float = 0.0
    train_teacher_adapters: bool = True
    log_gw_diagnostic: bool = False
    pretrain_epochs: int = 50
    pretrain_lr: float = 1e-3


SECTIONS = {"data": DataConfig, "tasks": TasksConfig, "model": ModelConfig, "train": TrainConfig}


def _coerce(value: Any, default: Any, key_path: str) -> Any:
    if default is None or isinstance(default, (list, dict)):
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", key_path)
        return value
    if isinstance(default, int) and not isinstance(value, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, int):
            return value
        raise ConfigError(f"expected an integer, got {value!r}", key_path)
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, str) and isinstance(value, str):
        return value
    raise ConfigError(f"expected {type(default).__name__}, got {value!r}", key_path)


def _section(cls, data: Any, name: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("section must be a mapping", name)
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError("unknown key", f"{name}.{unknown[0]}")
    values = {}
    for key, value in data.items():
        spec = known[key]
        default = spec.default if spec.default is not MISSING else spec.default_factory()
        values[key] = _coerce(value, default, f"{name}.{key}")
    return cls(**values)


@dataclass
class RunConfig:
    """Complete configuration of a run; every default is materialized in ``to_dict``."""

    data: DataConfig = field(default_factory=DataConfig)
    tasks: TasksConfig = field(default_factory=TasksConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"

    def __post_init__(self) -> None:
        if self.data.generator not in ("blobs", "idx"):
            raise ConfigError(f"unknown generator {self.data.generator!r}", "data.generator")
        if self.data.scenario not in ("standard", "cross-dataset"):
            raise ConfigError(f"unknown scenario {self.data.scenario!r}", "data.scenario")
        # resolve the loss and trainer settings once so bad values fail at load time
        self.amalgamation()
        self.pretraining()

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = sorted(set(data) - set(SECTIONS) - {"output_dir"})
        if unknown:
            raise ConfigError("unknown key", unknown[0])
        sections = {name: _section(section_cls, data.get(name), name) for name, section_cls in SECTIONS.items()}
        output_dir = data.get("output_dir", "runs/default")
        if not isinstance(output_dir, str):
            raise ConfigError(f"expected a path string, got {output_dir!r}", "output_dir")
        return cls(output_dir=output_dir, **sections)

    def loss_weights(self) -> LossWeights:
        train = self.train
        try:
            return LossWeights(
                lambda_intra=train.lambda_intra,
                lambda_inter=train.lambda_inter,
                lambda_align=train.lambda_align,
                lambda_std=train.lambda_std,
                margin=train.alpha,
                temperature=train.temperature,
                distill_temperature=train.distill_temperature,
                gw_exponent=train.gw_exponent,
            )
        except ConfigError as e:
            key = "alpha" if e.key_path == "margin" else e.key_path
            raise ConfigError(e.detail, f"train.{key}") from None

    def amalgamation(self) -> AmalgamationConfig:
        train = self.train
        try:
            augmentation = AugmentationPolicy(
                noise_std=train.aug_noise,
                mask_prob=train.aug_mask_prob,
                scale_jitter=train.aug_scale_jitter,
                seed=train.seed,
            )
        except ValueError as e:
            raise ConfigError(str(e), "train.aug_noise") from None
        return AmalgamationConfig(
            weights=self.loss_weights(),
            inter_metric=train.inter_metric,
            spatial_channels=train.spatial_channels,
            reduction=train.reduction,
            kl_direction=train.kl_direction,
            target_mode=train.target_mode,
            teacher_view=train.teacher_view,
            intra_loss=train.intra_loss,
            lr=train.lr,
            weight_decay=train.weight_decay,
            batch_size=train.batch_size,
            epochs=train.epochs,
            seed=train.seed,
            augmentation=augmentation,
            adapter_channels=self.model.adapter_channels,
            common_dim=self.model.common_dim,
            clip_grad_norm=train.clip_grad_norm,
            train_teacher_adapters=train.train_teacher_adapters,
            log_gw_diagnostic=train.log_gw_diagnostic,
        )

    def pretraining(self) -> PretrainConfig:
        try:
            return PretrainConfig(
                lr=self.train.pretrain_lr,
                weight_decay=self.train.weight_decay,
                batch_size=self.train.batch_size,
                epochs=self.train.pretrain_epochs,
                seed=self.train.seed,
            )
        except ConfigError as e:
            raise ConfigError(e.detail, f"train.{e.key_path}") from None


def parse_override(text: str) -> Dict[str, Any]:
    """Turn ``section.key=value`` into a nested mapping; values are JSON literals or plain strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    path, raw = text.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested: Dict[str, Any] = {keys[-1]: value}
    for key in reversed(keys[:-1]):
        nested = {key: nested}
    return nested


def merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return data


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    output_dir: Optional[str] = None,
) -> RunConfig:
    """
    Load a JSON or YAML config, apply ``--set`` overrides and validate.

    Args:
        path: Config file; defaults apply when omitted
        overrides: ``section.key=value`` strings applied in order
        output_dir: Replaces ``output_dir`` when given

    Returns:
        The validated RunConfig
    """
    data = read_config_file(path) if path is not None else {}
    for text in overrides:
        data = merge(data, parse_override(text))
    if output_dir is not None:
        data["output_dir"] = output_dir
    config = RunConfig.from_dict(data)
    logger.debug(f"loaded config from {path or 'defaults'} with {len(overrides)} overrides")
    return config


def write_resolved(config: RunConfig, directory: Optional[Union[str, Path]] = None) -> Path:
    directory = Path(directory) if directory is not None else config.output_path
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_NAME
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return path
