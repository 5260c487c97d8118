"""
Run Metrics
===========

Per-epoch records, the run summary and the JSON-lines sink they are written to.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..core.errors import AmalgamError
from ..losses.objective import LossBreakdown, LossWeights

logger = logging.getLogger(__name__)

LEDGER_TOLERANCE = 1e-12


@dataclass
class EpochRecord:
    epoch: int
    losses: LossBreakdown
    lr: float
    acc_union: Optional[float] = None
    acc_tasks: List[float] = field(default_factory=list)
    gw_diagnostic: Optional[float] = None
    wall_clock: float = field(default=0.0, compare=False)

    def to_dict(self, include_wall_clock: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "epoch": self.epoch,
            "losses": self.losses.to_dict(),
            "lr": self.lr,
            "acc_union": self.acc_union,
            "acc_tasks": list(self.acc_tasks),
        }
        if self.gw_diagnostic is not None:
            data["gw_diagnostic"] = self.gw_diagnostic
        if include_wall_clock:
            data["wall_clock"] = self.wall_clock
        return data


@dataclass
class RunMetrics:
    """Everything a run reports; equality ignores wall-clock time."""

    method: str
    seed: int
    weights: LossWeights
    epochs: List[EpochRecord] = field(default_factory=list)
    teacher_digests_before: Dict[str, str] = field(default_factory=dict)
    teacher_digests_after: Dict[str, str] = field(default_factory=dict)

    def append(self, record: EpochRecord) -> None:
        if record.epoch != len(self.epochs):
            raise AmalgamError(f"epoch {record.epoch} recorded after {len(self.epochs)} epochs")
        self.epochs.append(record)

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.epochs[-1] if self.epochs else None

    @property
    def loss_trace(self) -> List[float]:
        return [r.losses.total for r in self.epochs]

    def ledger_errors(self) -> List[float]:
        return [r.losses.ledger_error(self.weights) for r in self.epochs]

    def check_ledger(self, tolerance: float = LEDGER_TOLERANCE) -> None:
        for record, error in zip(self.epochs, self.ledger_errors()):
            if not error <= tolerance:
                raise AmalgamError(f"epoch {record.epoch}: loss ledger off by {error:.3e}")

    def teachers_unchanged(self) -> bool:
        return self.teacher_digests_before == self.teacher_digests_after

    def summary(self) -> Dict[str, Any]:
        """Deterministic run summary; wall-clock is left out."""
        final = self.final
        return {
            "method": self.method,
            "seed": self.seed,
            "weights": self.weights.to_dict(),
            "epochs": [r.to_dict(include_wall_clock=False) for r in self.epochs],
            "final": {
                "acc_union": final.acc_union if final else None,
                "acc_tasks": list(final.acc_tasks) if final else [],
                "loss": final.losses.total if final else math.nan,
            },
            "teacher_digests_before": dict(self.teacher_digests_before),
            "teacher_digests_after": dict(self.teacher_digests_after),
        }


class MetricsWriter:
    """Appends one JSON object per epoch to a ``metrics.jsonl`` file."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def write(self, record: EpochRecord) -> None:
        with self.path.open("a") as handle:
            handle.write(json.dumps(record.to_dict()) + "\n")


def read_metrics(path: Union[str, Path]) -> List[Dict[str, Any]]:
    with Path(path).open() as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_summary(metrics: RunMetrics, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(metrics.summary(), indent=2, sort_keys=True))
    logger.info(f"wrote run summary to {path}")
    return path
