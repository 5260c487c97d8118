"""
Tests for configuration loading and the amalgam command line.
"""

import json

import pytest
import yaml

from amalgam.cli.ablation import AXES, run_ablation, slug
from amalgam.cli.config import RESOLVED_NAME, RunConfig, load_config, merge, parse_override
from amalgam.cli.main import EXIT_CONFIG, EXIT_MISSING_CHECKPOINT, EXIT_OK, main
from amalgam.core.errors import ConfigError
from amalgam.training.metrics import read_metrics


def error_of(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
    return json.loads(lines[-1])


class TestOverrides:
    def test_parse_override_values(self):
        assert parse_override("train.lr=0.01") == {"train": {"lr": 0.01}}
        assert parse_override("train.inter_metric=cosine") == {"train": {"inter_metric": "cosine"}}
        assert parse_override("model.teacher_widths=[[8, 8]]") == {"model": {"teacher_widths": [[8, 8]]}}
        assert parse_override("output_dir=runs/x") == {"output_dir": "runs/x"}

    @pytest.mark.parametrize("text", ["train.lr", "=3"])
    def test_malformed_override(self, text):
        with pytest.raises(ConfigError):
            parse_override(text)

    def test_merge_is_recursive(self):
        merged = merge({"train": {"lr": 1.0, "epochs": 3}}, {"train": {"lr": 2.0}})
        assert merged == {"train": {"lr": 2.0, "epochs": 3}}


class TestRunConfig:
    def test_defaults_resolve(self):
        config = RunConfig()
        assert config.amalgamation().weights.lambda_align == 10.0
        assert config.amalgamation().weights.margin == 0.4
        assert config.pretraining().epochs == config.train.pretrain_epochs

    def test_yaml_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"train": {"epochs": 3, "lr": 0.01}, "output_dir": "from-file"}))
        config = load_config(path, ["train.epochs=5"], output_dir=str(tmp_path / "cli"))
        assert config.train.epochs == 5
        assert config.train.lr == 0.01
        assert config.output_dir == str(tmp_path / "cli")

    def test_json_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"data": {"num_classes": 6}, "tasks": {"teacher_count": 3}}))
        config = load_config(path)
        assert config.data.num_classes == 6 and config.tasks.teacher_count == 3

    def test_integral_float_becomes_int(self):
        assert load_config(None, ["train.epochs=2.0"]).train.epochs == 2

    @pytest.mark.parametrize(
        "override,key",
        [
            ("train.bogus=1", "train.bogus"),
            ("train.alpha=2", "train.alpha"),
            ("train.inter_metric=mmd-spatial", "train.spatial_channels"),
            ("train.epochs=\"many\"", "train.epochs"),
            ("train.log_gw_diagnostic=1", "train.log_gw_diagnostic"),
            ("train.lambda_align=-1", "train.lambda_align"),
            ("data.generator=mnist", "data.generator"),
        ],
    )
    def test_invalid_values_name_their_key(self, override, key):
        with pytest.raises(ConfigError) as info:
            load_config(None, [override])
        assert info.value.key_path == key

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")


class TestCommands:
    def test_gradcheck_single_loss(self, capsys, tmp_path):
        argv = ["gradcheck", "--op", "mmd_sq", "--configurations", "2", "--output-dir", str(tmp_path / "run")]
        assert main(argv) == EXIT_OK
        out = capsys.readouterr().out
        assert "mmd_sq" in out and "PASS" in out

    def test_gradcheck_writes_resolved_config(self, capsys, tmp_path):
        argv = ["gradcheck", "--op", "total_loss", "--configurations", "1", "--output-dir", str(tmp_path / "run")]
        argv += ["--set", "train.seed=3"]
        assert main(argv) == EXIT_OK
        resolved = json.loads((tmp_path / "run" / RESOLVED_NAME).read_text())
        assert resolved["train"]["seed"] == 3
        assert (tmp_path / "run" / "run.log").is_file()

    def test_gradcheck_unknown_loss(self, capsys, tmp_path):
        assert main(["gradcheck", "--op", "hinge", "--output-dir", str(tmp_path / "run")]) == EXIT_CONFIG
        assert error_of(capsys)["key"] == "op"

    def test_unknown_key_exit_code(self, capsys, tiny_args):
        assert main(["amalgamate", *tiny_args, "--set", "train.bogus=1"]) == EXIT_CONFIG
        error = error_of(capsys)
        assert error["error"] == "ConfigError"
        assert error["key"] == "train.bogus"

    def test_amalgamate_without_teachers(self, capsys, tiny_args, tmp_path):
        assert main(["amalgamate", *tiny_args]) == EXIT_MISSING_CHECKPOINT
        assert error_of(capsys)["error"] == "CheckpointNotFoundError"
        resolved = json.loads((tmp_path / "run" / RESOLVED_NAME).read_text())
        assert resolved["train"]["epochs"] == 2
        assert resolved["train"]["lambda_align"] == 10.0

    def test_evaluate_missing_checkpoint(self, tiny_args, tmp_path):
        assert main(["evaluate", "--ckpt", str(tmp_path / "nothing"), *tiny_args]) == EXIT_MISSING_CHECKPOINT

    def test_gen_data_writes_splits(self, tiny_args, tmp_path):
        assert main(["gen-data", *tiny_args]) == EXIT_OK
        data = tmp_path / "run" / "data"
        assert (data / "train" / "data.bin").is_file()
        assert (data / "test" / "meta.json").is_file()
        tasks = json.loads((data / "tasks.json").read_text())
        assert [t["slots"] for t in tasks] == [[0, 2], [2, 4]]
        assert (tmp_path / "run" / "run.log").is_file()

    @pytest.mark.slow
    @pytest.mark.integration
    def test_full_pipeline(self, tiny_args, tmp_path):
        run = tmp_path / "run"
        assert main(["gen-data", *tiny_args]) == EXIT_OK
        assert main(["pretrain", "--task", "0", *tiny_args]) == EXIT_OK
        assert main(["pretrain", "--task", "1", *tiny_args]) == EXIT_OK
        assert (run / "teachers" / "teacher1" / "manifest.json").is_file()

        assert main(["amalgamate", *tiny_args]) == EXIT_OK
        first = (run / "amalgamate" / "summary.json").read_text()
        summary = json.loads(first)
        assert len(summary["epochs"]) == 2
        assert summary["teacher_digests_before"] == summary["teacher_digests_after"]
        assert len((run / "amalgamate" / "metrics.jsonl").read_text().splitlines()) == 2

        assert main(["evaluate", "--ckpt", str(run / "amalgamate" / "student"), *tiny_args]) == EXIT_OK
        assert main(["evaluate", "--ckpt", str(run / "teachers" / "teacher0"), *tiny_args]) == EXIT_OK
        assert main(["baseline", "--method", "ensemble", *tiny_args]) == EXIT_OK
        ensemble = json.loads((run / "baseline-ensemble" / "summary.json").read_text())
        assert 0.0 <= ensemble["acc_union"] <= 1.0
        assert main(["baseline", "--method", "kd", *tiny_args]) == EXIT_OK
        kd = json.loads((run / "baseline-kd" / "summary.json").read_text())
        assert kd["method"] == "KD"

        assert main(["amalgamate", *tiny_args]) == EXIT_OK
        assert (run / "amalgamate" / "summary.json").read_text() == first

    @pytest.mark.slow
    @pytest.mark.integration
    def test_amalgamate_rerun_is_bitwise_identical(self, tiny_args, tmp_path):
        out = tmp_path / "run" / "amalgamate"
        assert main(["gen-data", *tiny_args]) == EXIT_OK
        assert main(["pretrain", "--task", "0", *tiny_args]) == EXIT_OK
        assert main(["pretrain", "--task", "1", *tiny_args]) == EXIT_OK

        assert main(["amalgamate", *tiny_args]) == EXIT_OK
        summary = (out / "summary.json").read_bytes()
        metrics = read_metrics(out / "metrics.jsonl")
        assert main(["amalgamate", *tiny_args]) == EXIT_OK
        assert (out / "summary.json").read_bytes() == summary
        rerun = read_metrics(out / "metrics.jsonl")
        assert [{k: v for k, v in r.items() if k != "wall_clock"} for r in rerun] == [
            {k: v for k, v in r.items() if k != "wall_clock"} for r in metrics
        ]


class TestAblation:
    def test_axis_rows(self, tiny_config):
        assert [v.name for v in AXES["losses"](tiny_config)] == ["CKA", "CKA-Intra", "CKA-Inter", "KD", "CFL"]
        metric_rows = AXES["inter-metric"](tiny_config)
        assert [v.name for v in metric_rows] == ["w/o inter", "Euclidean", "Cosine", "MMD", "w/o intra"]
        assert metric_rows[3].overrides == {"inter_metric": "mmd-spatial", "spatial_channels": 8}

    def test_slug(self):
        assert slug("w/o inter") == "w-o-inter"
        assert slug("CKA-Intra") == "cka-intra"

    def test_unknown_axis(self, tiny_config):
        with pytest.raises(ConfigError):
            run_ablation(tiny_config, "optimizers", [0])

    @pytest.mark.slow
    @pytest.mark.integration
    def test_losses_axis(self, tiny_config):
        rows, summary = run_ablation(tiny_config, "losses", [0])
        assert list(summary["method"]) == ["CKA", "CKA-Intra", "CKA-Inter", "KD", "CFL"]
        assert list(summary["count"]) == [1] * 5
        assert list(rows.columns) == ["method", "seed", "acc_union", "acc_task1", "acc_task2"]
        assert rows["acc_union"].between(0.0, 1.0).all()
        assert (tiny_config.output_path / "ablation_losses.csv").is_file()
