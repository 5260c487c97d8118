"""
Total Objective
===============

Weights for the four loss components and the weighted total, with a ledger
record of each component's value.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Union

from ..core.errors import ConfigError, NonFiniteError
from ..core.tensor import Tensor

logger = logging.getLogger(__name__)

COMPONENTS = ("intra", "inter", "align", "std")


@dataclass
class LossWeights:
    """Loss weights, margin and temperatures of the amalgamation objective."""

    lambda_intra: float = 1.0
    lambda_inter: float = 1.0
    lambda_align: float = 10.0
    lambda_std: float = 1.0
    margin: float = 0.4
    temperature: float = 0.5
    distill_temperature: float = 1.0
    gw_exponent: float = 2.0

    def __post_init__(self) -> None:
        for name in ("lambda_intra", "lambda_inter", "lambda_align", "lambda_std"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0.0:
                raise ConfigError(f"must be finite and non-negative, got {value}", name)
            setattr(self, name, value)
        if not -1.0 <= float(self.margin) <= 1.0:
            raise ConfigError(f"must lie in [-1, 1], got {self.margin}", "margin")
        for name in ("temperature", "distill_temperature", "gw_exponent"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise ConfigError(f"must be positive, got {value}", name)
            setattr(self, name, value)

    def weight_of(self, component: str) -> float:
        return {
            "intra": self.lambda_intra,
            "inter": self.lambda_inter,
            "align": self.lambda_align,
            "std": self.lambda_std,
        }[component]

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LossWeights":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("unknown key", unknown[0])
        return cls(**data)


@dataclass
class LossBreakdown:
    """Component values and their weighted total."""

    intra: float = 0.0
    inter: float = 0.0
    align: float = 0.0
    std: float = 0.0
    total: float = 0.0
    objective: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def weighted_total(self, weights: LossWeights) -> float:
        total = 0.0
        for name in COMPONENTS:
            total = total + weights.weight_of(name) * getattr(self, name)
        return total

    def ledger_error(self, weights: LossWeights) -> float:
        return abs(self.total - self.weighted_total(weights))

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in COMPONENTS + ("total",)}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "LossBreakdown":
        return cls(**{name: float(data[name]) for name in COMPONENTS + ("total",)})


Component = Union[Tensor, float, None]


def total_loss(components: Mapping[str, Component], weights: LossWeights) -> LossBreakdown:
    """
    Weighted sum ``l_intra*intra + l_inter*inter + l_a*align + l_d*std``.

    Args:
        components: Values keyed by ``intra``, ``inter``, ``align``, ``std``;
            missing or ``None`` entries count as zero
        weights: Loss weights

    Returns:
        LossBreakdown whose ``objective`` carries the differentiable total
    """
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise KeyError(f"unknown loss components: {sorted(unknown)}")

    values: Dict[str, float] = {}
    objective: Optional[Tensor] = None
    scalar_total = 0.0
    for name in COMPONENTS:
        component = components.get(name)
        if component is None:
            values[name] = 0.0
            scalar_total = scalar_total + weights.weight_of(name) * 0.0
            continue
        value = component.item() if isinstance(component, Tensor) else float(component)
        if not math.isfinite(value):
            raise NonFiniteError(f"loss component {name} is not finite", component=name)
        values[name] = value
        scalar_total = scalar_total + weights.weight_of(name) * value
        if isinstance(component, Tensor):
            term = component.scale(weights.weight_of(name))
            objective = term if objective is None else objective + term

    return LossBreakdown(total=scalar_total, objective=objective, **values)
