"""
Amalgam Command Line
====================

``amalgam <subcommand> [--config FILE] [--set section.key=value ...]``

Subcommands generate data, pretrain teachers, amalgamate a student, run
baselines, evaluate checkpoints, check loss gradients and sweep ablations.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import rich.box
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .. import __version__
from ..core.errors import AmalgamError, CheckpointNotFoundError, ConfigError
from . import pipeline
from .ablation import AXES, run_ablation
from .config import RunConfig, load_config, write_resolved

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING_CHECKPOINT = 3

console = Console()


def setup_logging(level: int, log_dir: Optional[Path] = None) -> None:
    """Rich console handler on the root logger, plus ``run.log`` when an output directory is known."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    root.setLevel(level)
    root.addHandler(RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False))
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "run.log")
        file_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(file_handler)


def teardown_logging() -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        handler.flush()
        if isinstance(handler, logging.FileHandler):
            handler.close()
            root.removeHandler(handler)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", type=str, help="JSON or YAML run configuration")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one configuration value (repeatable)",
    )
    common.add_argument("--output-dir", type=str, help="Replace the configured output directory")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="amalgam",
        description="Contrastive knowledge amalgamation: merge disjoint-task teachers into one student",
    )
    parser.add_argument("--version", action="version", version=f"amalgam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="Generate and persist the train/test splits")

    pretrain = sub.add_parser("pretrain", parents=[common], help="Pretrain the teacher of one task")
    pretrain.add_argument("--task", type=int, required=True, help="Task index, starting at 0")

    sub.add_parser("amalgamate", parents=[common], help="Train the student from the pretrained teachers")

    baseline = sub.add_parser("baseline", parents=[common], help="Run a reference method")
    baseline.add_argument("--method", choices=pipeline.BASELINES, required=True)

    evaluate = sub.add_parser("evaluate", parents=[common], help="Evaluate a checkpoint on the test split")
    evaluate.add_argument("--ckpt", type=str, required=True, help="Checkpoint directory")

    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of every loss")
    gradcheck.add_argument("--op", default="all", help="Loss name or 'all'")
    gradcheck.add_argument("--configurations", type=int, default=10, help="Random points per loss")

    ablate = sub.add_parser("ablate", parents=[common], help="Sweep method variants over seeds")
    ablate.add_argument("--axis", choices=sorted(AXES), required=True)
    ablate.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ablate.add_argument("--workers", type=int, default=1, help="Parallel configurations")

    return parser.parse_args(argv)


def _fmt(value: Any) -> str:
    return "-" if value is None else f"{value:.4f}"


def report_table(title: str, rows: List[Dict[str, Any]]) -> Table:
    table = Table(title=title, box=rich.box.ROUNDED)
    table.add_column("Method", style="cyan")
    table.add_column("Union acc", style="green", justify="right")
    tasks = max((len(r.get("acc_tasks", [])) for r in rows), default=0)
    for i in range(tasks):
        table.add_column(f"Task {i + 1}", justify="right")
    own = any("acc_own_task" in r for r in rows)
    if own:
        table.add_column("Own task", style="yellow", justify="right")
    for row in rows:
        cells = [str(row["method"]), _fmt(row.get("acc_union"))]
        cells += [_fmt(a) for a in row.get("acc_tasks", [])]
        if own:
            cells.append(_fmt(row.get("acc_own_task")))
        table.add_row(*cells)
    return table


def run_command(args: argparse.Namespace, config: RunConfig) -> int:
    command = args.command
    if command == "gradcheck":
        results = pipeline.gradcheck(args.op, configurations=args.configurations, seed=config.train.seed)
        for result in results:
            status = "PASS" if result.passed else "FAIL"
            style = "green" if result.passed else "red"
            console.print(f"{result.name} {result.max_error:.3e} [{style}]{status}[/{style}]")
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE

    if command == "gen-data":
        bundle = pipeline.gen_data(config)
        table = Table(title="Tasks", box=rich.box.ROUNDED)
        table.add_column("Teacher", style="cyan")
        table.add_column("Classes", style="white")
        table.add_column("Slots", style="yellow")
        for task in bundle.tasks:
            table.add_row(task.teacher_id, str(list(task.classes)), f"[{task.slots[0]}, {task.slots[1]})")
        console.print(table)
    elif command == "pretrain":
        console.print(report_table("Teacher", [pipeline.pretrain(config, args.task)]))
    elif command == "amalgamate":
        result = pipeline.amalgamate(config)
        final = result.metrics.final
        row = {"method": "CKA", "acc_union": final.acc_union, "acc_tasks": final.acc_tasks}
        console.print(report_table("Amalgamation", [row]))
    elif command == "baseline":
        console.print(report_table("Baseline", [pipeline.baseline(config, args.method)]))
    elif command == "evaluate":
        console.print(report_table("Evaluation", [pipeline.evaluate(config, args.ckpt)]))
    elif command == "ablate":
        rows, summary = run_ablation(config, args.axis, args.seeds, args.workers)
        table = Table(title=f"Ablation: {args.axis}", box=rich.box.ROUNDED)
        table.add_column("Method", style="cyan")
        table.add_column("Union acc (mean ± std)", style="green", justify="right")
        table.add_column("Seeds", justify="right")
        for _, record in summary.iterrows():
            spread = 0.0 if record["count"] < 2 else record["std"]
            table.add_row(str(record["method"]), f"{record['mean']:.4f} ± {spread:.4f}", str(int(record["count"])))
        console.print(table)
    return EXIT_OK


def error_line(error: BaseException) -> str:
    return json.dumps(
        {
            "error": type(error).__name__,
            "message": str(error),
            "key": getattr(error, "key_path", None) or None,
        }
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)
    try:
        config = load_config(args.config, args.overrides, args.output_dir)
        setup_logging(level, config.output_path)
        write_resolved(config)
        return run_command(args, config)
    except ConfigError as e:
        sys.stderr.write(error_line(e) + "\n")
        return EXIT_CONFIG
    except CheckpointNotFoundError as e:
        sys.stderr.write(error_line(e) + "\n")
        return EXIT_MISSING_CHECKPOINT
    except (AmalgamError, OSError, ValueError) as e:
        logger.debug("run failed", exc_info=True)
        sys.stderr.write(error_line(e) + "\n")
        return EXIT_FAILURE
    finally:
        teardown_logging()


def main_cli() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    main_cli()
