"""
Ablation Sweeps
===============

Runs a family of method variants over several seeds and tabulates union and
per-task accuracy. Teachers are pretrained once per seed; every
(variant, seed) pair then trains in its own output subdirectory, optionally in
a process pool.
"""

import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

import pandas as pd

from ..core.errors import ConfigError
from .config import RunConfig, merge
from .pipeline import build_data, load_teachers, prepare_data, pretrain_all, run_amalgamation, save_data

logger = logging.getLogger(__name__)

MMD_SPATIAL_CHANNELS = 8


@dataclass(frozen=True)
class Variant:
    """One row of an ablation table: a trainer flavor plus ``train`` overrides."""

    name: str
    method: str = "CKA"
    overrides: Dict[str, Any] = field(default_factory=dict)


def _losses_axis(config: RunConfig) -> List[Variant]:
    return [
        Variant("CKA"),
        Variant("CKA-Intra", overrides={"lambda_intra": 0.0}),
        Variant("CKA-Inter", overrides={"lambda_inter": 0.0}),
        Variant("KD", method="KD"),
        Variant("CFL", method="CFL"),
    ]


def _inter_metric_axis(config: RunConfig) -> List[Variant]:
    channels = config.train.spatial_channels or MMD_SPATIAL_CHANNELS
    return [
        Variant("w/o inter", overrides={"lambda_inter": 0.0}),
        Variant("Euclidean", overrides={"inter_metric": "euclidean"}),
        Variant("Cosine", overrides={"inter_metric": "cosine"}),
        Variant("MMD", overrides={"inter_metric": "mmd-spatial", "spatial_channels": channels}),
        Variant("w/o intra", overrides={"lambda_intra": 0.0}),
    ]


AXES: Dict[str, Callable[[RunConfig], List[Variant]]] = {
    "losses": _losses_axis,
    "inter-metric": _inter_metric_axis,
}


def slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def seed_config(config: RunConfig, base: Path, seed: int) -> RunConfig:
    """Copy of ``config`` with every seed set to ``seed`` and its own output directory."""
    data = config.to_dict()
    data = merge(
        data,
        {
            "data": {"seed": seed},
            "tasks": {"seed": seed},
            "train": {"seed": seed},
            "output_dir": str(base / f"seed-{seed}"),
        },
    )
    return RunConfig.from_dict(data)


def _prepare_seed(config_dict: Dict[str, Any]) -> str:
    config = RunConfig.from_dict(config_dict)
    bundle = build_data(config)
    save_data(bundle, config.output_path / "data")
    pretrain_all(config, bundle)
    return config.output_dir


def _run_variant(config_dict: Dict[str, Any], variant: Variant) -> Dict[str, Any]:
    config = RunConfig.from_dict(merge(config_dict, {"train": dict(variant.overrides)}))
    bundle = prepare_data(config)
    teachers = load_teachers(config, bundle)
    result = run_amalgamation(config, bundle, teachers, variant.method, config.output_path / slug(variant.name))
    final = result.metrics.final
    row = {"method": variant.name, "seed": config.train.seed, "acc_union": final.acc_union}
    for i, acc in enumerate(final.acc_tasks, start=1):
        row[f"acc_task{i}"] = acc
    return row


def _map(fn, jobs: Sequence[Tuple], workers: int) -> List[Any]:
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def run_ablation(
    config: RunConfig, axis: str, seeds: Sequence[int], workers: int = 1
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Sweep the variants of ``axis`` over ``seeds``.

    Args:
        config: Base configuration
        axis: ``losses`` or ``inter-metric``
        seeds: Seeds applied to data, task split and training
        workers: Process-pool size; 1 runs serially

    Returns:
        ``(rows, summary)``: one row per (variant, seed), and mean/std of union
        accuracy per variant in table order
    """
    if axis not in AXES:
        raise ConfigError(f"unknown axis {axis!r}; expected one of {sorted(AXES)}", "axis")
    if not seeds:
        raise ConfigError("at least one seed is required", "seeds")
    variants = AXES[axis](config)
    base = config.output_path / f"ablation-{axis}"
    per_seed = [seed_config(config, base, seed).to_dict() for seed in seeds]

    logger.info(f"ablation {axis}: preparing teachers for seeds {list(seeds)}")
    _map(_prepare_seed, [(c,) for c in per_seed], workers)
    jobs = [(c, v) for v in variants for c in per_seed]
    logger.info(f"ablation {axis}: running {len(jobs)} configurations with {workers} worker(s)")
    rows = pd.DataFrame(_map(_run_variant, jobs, workers))

    task_columns = sorted((c for c in rows.columns if c.startswith("acc_task")), key=lambda c: int(c[8:]))
    rows = rows[["method", "seed", "acc_union"] + task_columns]
    order = [v.name for v in variants]
    summary = (
        rows.groupby("method", sort=False)["acc_union"]
        .agg(["mean", "std", "count"])
        .reindex(order)
        .reset_index()
    )
    base.mkdir(parents=True, exist_ok=True)
    csv_path = config.output_path / f"ablation_{axis}.csv"
    rows.to_csv(csv_path, index=False)
    logger.info(f"wrote {csv_path}")
    return rows, summary
