"""
Network Layers
==============

Parameterized building blocks for teachers and the student: MLP encoders of
configurable widths, the two-layer projection head, classifier heads bound
to union-space slots, and the common-space stack of per-model adapters
feeding one shared MLP.
"""

import hashlib
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, ShapeError
from ..core.tensor import Tensor, normalize_rows, relu

logger = logging.getLogger(__name__)

STUDENT_ID = "student"
ADAPTER_CHANNELS = 256
COMMON_DIM = 128


class Module:
    """Base class holding named parameters and child modules in registration order."""

    def __init__(self) -> None:
        self._parameters: "OrderedDict[str, Tensor]" = OrderedDict()
        self._modules: "OrderedDict[str, Module]" = OrderedDict()

    def register_parameter(self, name: str, tensor: Tensor) -> Tensor:
        tensor.name = name
        self._parameters[name] = tensor
        return tensor

    def register_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> "OrderedDict[str, Tensor]":
        named: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, tensor in self._parameters.items():
            named[f"{prefix}{name}"] = tensor
        for name, module in self._modules.items():
            named.update(module.named_parameters(prefix=f"{prefix}{name}."))
        return named

    def parameters(self) -> List[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def set_requires_grad(self, flag: bool) -> None:
        for tensor in self.parameters():
            tensor.requires_grad = flag

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; names and shapes must match."""
        named = self.named_parameters()
        missing = set(named) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, tensor in named.items():
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != tensor.shape:
                raise ShapeError(f"load {name}", tensor.shape, values.shape)
            tensor.values = values.copy()


def _check_widths(widths: Sequence[int], what: str) -> Tuple[int, ...]:
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w <= 0 for w in widths):
        raise ConfigError(f"widths must be positive and at least two long, got {widths}", what)
    return widths


class Linear(Module):
    """Affine map ``x W + b`` with uniform fan-in initialization."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        if in_features <= 0 or out_features <= 0:
            raise ConfigError(f"layer widths must be positive, got {in_features}x{out_features}", "widths")
        bound = 1.0 / np.sqrt(in_features)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.register_parameter(
            "weight", Tensor(rng.uniform(-bound, bound, size=(in_features, out_features)), requires_grad=True)
        )
        self.bias = self.register_parameter(
            "bias", Tensor(rng.uniform(-bound, bound, size=(1, out_features)), requires_grad=True)
        )

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError("linear", x.shape, self.weight.shape)
        return x @ self.weight + self.bias


class Mlp(Module):
    """Stack of linear layers with ReLU between them and none after the last."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator):
        super().__init__()
        self.widths = _check_widths(widths, "widths")
        self.layers = [
            self.register_module(f"layer{i}", Linear(a, b, rng))
            for i, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:]))
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x

    @property
    def output_dim(self) -> int:
        return self.widths[-1]


class MlpEncoder(Mlp):
    """Backbone mapping flattened inputs to ``B x m`` features."""


class ProjectionHead(Module):
    """Two-layer head ``m -> h -> d`` whose outputs are unit rows."""

    def __init__(self, feature_dim: int, hidden_dim: int, projection_dim: int, rng: np.random.Generator):
        super().__init__()
        self.mlp = self.register_module("mlp", Mlp((feature_dim, hidden_dim, projection_dim), rng))

    def __call__(self, features: Tensor) -> Tensor:
        return normalize_rows(self.mlp(features))


class ClassifierHead(Module):
    """Linear classifier whose outputs occupy ``slots`` of the union label space."""

    def __init__(self, feature_dim: int, slots: Tuple[int, int], rng: np.random.Generator):
        super().__init__()
        start, stop = int(slots[0]), int(slots[1])
        if stop <= start:
            raise ConfigError(f"slot range must be non-empty, got {slots}", "slots")
        self.slots = (start, stop)
        self.linear = self.register_module("linear", Linear(feature_dim, stop - start, rng))

    @property
    def width(self) -> int:
        return self.slots[1] - self.slots[0]

    def __call__(self, features: Tensor) -> Tensor:
        return self.linear(features)


@dataclass
class ModelSpec:
    """Architecture of one teacher or student network."""

    model_id: str
    input_dim: int
    hidden: Tuple[int, ...]
    feature_dim: int
    slots: Tuple[int, int]
    kind: str = "teacher"
    projection_hidden: int = 128
    projection_dim: int = 64

    def __post_init__(self) -> None:
        self.hidden = tuple(int(h) for h in self.hidden)
        self.slots = (int(self.slots[0]), int(self.slots[1]))
        if self.kind not in ("teacher", "student"):
            raise ConfigError(f"unknown model kind {self.kind!r}", "kind")
        _check_widths((self.input_dim,) + self.hidden + (self.feature_dim,), f"{self.model_id}.widths")

    @property
    def encoder_widths(self) -> Tuple[int, ...]:
        return (self.input_dim,) + self.hidden + (self.feature_dim,)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["hidden"] = list(self.hidden)
        data["slots"] = list(self.slots)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        return cls(**dict(data))


class _Network(Module):
    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.encoder = self.register_module("encoder", MlpEncoder(spec.encoder_widths, rng))
        self.frozen = False

    @property
    def model_id(self) -> str:
        return self.spec.model_id

    @property
    def slots(self) -> Tuple[int, int]:
        return self.spec.slots

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    def encode(self, x: Tensor) -> Tensor:
        return self.encoder(x)

    def classify(self, features: Tensor) -> Tensor:
        return self.classifier(features)

    def logits(self, x: Tensor) -> Tensor:
        return self.classify(self.encode(x))

    def freeze(self) -> None:
        self.frozen = True
        self.set_requires_grad(False)


class TeacherModel(_Network):
    """Encoder plus classifier head over the teacher's slots."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec, rng)
        self.classifier = self.register_module("classifier", ClassifierHead(spec.feature_dim, spec.slots, rng))


class StudentModel(_Network):
    """Encoder with a projection branch for contrast and a union-space classifier."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__(spec, rng)
        self.projection = self.register_module(
            "projection", ProjectionHead(spec.feature_dim, spec.projection_hidden, spec.projection_dim, rng)
        )
        self.classifier = self.register_module("classifier", ClassifierHead(spec.feature_dim, spec.slots, rng))

    def project(self, features: Tensor) -> Tensor:
        return self.projection(features)


def init_params(spec: ModelSpec, seed: int) -> _Network:
    """
    Build a teacher or student with weights drawn deterministically from ``seed``.

    Args:
        spec: Architecture; ``spec.kind`` selects teacher or student
        seed: Initialization seed

    Returns:
        TeacherModel or StudentModel
    """
    rng = np.random.default_rng(seed)
    network = TeacherModel(spec, rng) if spec.kind == "teacher" else StudentModel(spec, rng)
    logger.debug(f"initialized {spec.kind} {spec.model_id} with widths {spec.encoder_widths} (seed {seed})")
    return network


@dataclass
class CommonSpaceSpec:
    feature_dims: Dict[str, int]
    adapter_channels: int = ADAPTER_CHANNELS
    shared_widths: Tuple[int, ...] = (ADAPTER_CHANNELS, COMMON_DIM)
    frozen_adapters: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature_dims": dict(self.feature_dims),
            "adapter_channels": self.adapter_channels,
            "shared_widths": list(self.shared_widths),
            "frozen_adapters": list(self.frozen_adapters),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CommonSpaceSpec":
        return cls(
            feature_dims={str(k): int(v) for k, v in data["feature_dims"].items()},
            adapter_channels=int(data.get("adapter_channels", ADAPTER_CHANNELS)),
            shared_widths=tuple(int(w) for w in data.get("shared_widths", (ADAPTER_CHANNELS, COMMON_DIM))),
            frozen_adapters=list(data.get("frozen_adapters", [])),
        )


class CommonSpaceStack(Module):
    """
    Per-model linear adapters into ``adapter_channels`` followed by one shared MLP.

    Every model path references the same shared MLP object.
    """

    def __init__(self, spec: CommonSpaceSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        if spec.shared_widths[0] != spec.adapter_channels:
            raise ConfigError(
                f"shared MLP input {spec.shared_widths[0]} differs from adapter channels {spec.adapter_channels}",
                "model.shared_widths",
            )
        self.adapters: "OrderedDict[str, Linear]" = OrderedDict()
        for model_id, dim in spec.feature_dims.items():
            self.adapters[model_id] = self.register_module(
                f"adapter.{model_id}", Linear(dim, spec.adapter_channels, rng)
            )
        self.shared = self.register_module("shared", Mlp(spec.shared_widths, rng))
        for model_id in spec.frozen_adapters:
            self.freeze_adapter(model_id)

    @classmethod
    def create(
        cls,
        feature_dims: Mapping[str, int],
        seed: int,
        adapter_channels: int = ADAPTER_CHANNELS,
        common_dim: int = COMMON_DIM,
    ) -> "CommonSpaceStack":
        spec = CommonSpaceSpec(
            feature_dims=dict(feature_dims),
            adapter_channels=adapter_channels,
            shared_widths=(adapter_channels, common_dim),
        )
        return cls(spec, np.random.default_rng(seed))

    @property
    def common_dim(self) -> int:
        return self.shared.output_dim

    def freeze_adapter(self, model_id: str) -> None:
        self._adapter(model_id).set_requires_grad(False)
        if model_id not in self.spec.frozen_adapters:
            self.spec.frozen_adapters.append(model_id)

    def _adapter(self, model_id: str) -> Linear:
        try:
            return self.adapters[model_id]
        except KeyError:
            raise KeyError(f"no common-space adapter for model {model_id!r}") from None

    def to_common(self, model_id: str, features: Tensor) -> Tensor:
        """Route ``features`` through the model's adapter, then the shared MLP."""
        return self.shared(self._adapter(model_id)(features))

    def trainable_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((n, t) for n, t in self.named_parameters().items() if t.requires_grad)


def parameter_digest(module: Module) -> str:
    """SHA-256 over parameter names, shapes and little-endian float64 bytes."""
    digest = hashlib.sha256()
    for name, tensor in module.named_parameters().items():
        digest.update(name.encode("utf-8"))
        digest.update(repr(tensor.shape).encode("utf-8"))
        digest.update(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())
    return digest.hexdigest()


def iter_named(modules: Mapping[str, Module]) -> Iterator[Tuple[str, Tensor]]:
    """Flatten several modules' parameters under ``<key>.`` prefixes."""
    for key, module in modules.items():
        for name, tensor in module.named_parameters(prefix=f"{key}.").items():
            yield name, tensor
