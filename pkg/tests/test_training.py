"""
Tests for teacher pretraining, the amalgamation trainer, baselines and
evaluation.
"""

import json
import logging
from dataclasses import replace

import numpy as np
import pytest

from amalgam.core.errors import ConfigError, DataFormatError, DegenerateInputError
from amalgam.data.datasets import Dataset
from amalgam.data.tasks import TaskSpec
from amalgam.losses.objective import LossWeights
from amalgam.models.checkpoint import MANIFEST_NAME, load_checkpoint
from amalgam.models.layers import init_params, parameter_digest
from amalgam.training import (
    AmalgamationConfig,
    AmalgamationTrainer,
    amalgamate_student,
    cfl_config,
    ensemble_predict,
    evaluate_task,
    evaluate_union,
    kd_config,
    pretrain_teacher,
    read_metrics,
    student_predictor,
    student_spec,
    supervised_baseline,
    teacher_predictor,
    teacher_spec,
)

STUDENT_WIDTHS = (16, 16)


def amalgamate(teachers, blobs, config, **kwargs):
    return amalgamate_student(teachers, blobs[0], config, widths=STUDENT_WIDTHS, projection_dim=8, **kwargs)


class TestTeachers:
    @pytest.mark.slow
    def test_pretrained_teachers_are_accurate(self, teachers, blobs, tasks):
        _, test = blobs
        for teacher, task in zip(teachers, tasks):
            assert evaluate_task(teacher, test, task) >= 0.9

    def test_teachers_are_frozen_with_task_slots(self, teachers, tasks):
        for teacher, task in zip(teachers, tasks):
            assert teacher.frozen
            assert teacher.slots == task.slots

    def test_teacher_predictor_pads_other_slots(self, teachers, blobs):
        scores = teacher_predictor(teachers[1], 4)(blobs[1].samples[:5])
        start, stop = teachers[1].slots
        np.testing.assert_array_equal(scores[:, :start], 0.0)
        np.testing.assert_allclose(scores[:, start:stop].sum(axis=1), np.ones(5))

    def test_ensemble_follows_slot_ranges(self, teachers, blobs):
        x = blobs[1].samples[:6]
        forward = ensemble_predict(teachers, x, 4)
        backward = ensemble_predict(list(reversed(teachers)), x, 4)
        np.testing.assert_array_equal(forward, backward)
        with pytest.raises(DataFormatError):
            ensemble_predict(teachers[:1], x, 4)


class TestTrainerSetup:
    def make_student(self):
        return init_params(student_spec(8, 4, STUDENT_WIDTHS, projection_dim=8), seed=0)

    def test_needs_a_teacher(self, small_config):
        with pytest.raises(DegenerateInputError):
            AmalgamationTrainer([], self.make_student(), small_config)

    def test_slot_ranges_must_cover_the_union(self, teachers, small_config):
        with pytest.raises(DataFormatError):
            AmalgamationTrainer(teachers[:1], self.make_student(), small_config)

    def test_unfrozen_teacher_is_frozen(self, tasks, small_config, caplog):
        fresh = [init_params(teacher_spec(task, 8, (16, 16)), seed=i) for i, task in enumerate(tasks)]
        with caplog.at_level(logging.WARNING, logger="amalgam.training.student"):
            AmalgamationTrainer(fresh, self.make_student(), small_config)
        assert all(t.frozen for t in fresh)
        assert "was not frozen" in caplog.text

    def test_frozen_adapters_are_not_trainable(self, teachers, small_config):
        config = replace(small_config, train_teacher_adapters=False)
        names = list(AmalgamationTrainer(teachers, self.make_student(), config).trainable)
        assert not any(name.startswith("common.adapter.teacher") for name in names)
        assert any(name.startswith("common.adapter.student.") for name in names)
        assert any(name.startswith("common.shared.") for name in names)
        assert any(name.startswith("student.") for name in names)

    def test_pool_smaller_than_a_batch(self, teachers, blobs, small_config):
        train = blobs[0]
        tiny = Dataset(train.samples[:5], train.labels[:5], train.num_classes)
        with pytest.raises(DegenerateInputError):
            amalgamate_student(teachers, tiny, small_config, widths=STUDENT_WIDTHS)

    @pytest.mark.parametrize(
        "changes,key",
        [
            (dict(inter_metric="manhattan"), "train.inter_metric"),
            (dict(inter_metric="mmd-spatial"), "train.spatial_channels"),
            (dict(spatial_channels=0), "train.spatial_channels"),
            (dict(epochs=0), "train.epochs"),
            (dict(teacher_view="view2"), "train.teacher_view"),
        ],
    )
    def test_config_validation(self, changes, key):
        with pytest.raises(ConfigError) as info:
            AmalgamationConfig(**changes)
        assert info.value.key_path == key


class TestAmalgamation:
    def test_losses_are_recorded_and_ledger_holds(self, teachers, blobs, small_config):
        metrics = amalgamate(teachers, blobs, small_config).metrics
        assert len(metrics.epochs) == small_config.epochs
        metrics.check_ledger()
        for record in metrics.epochs:
            losses = record.losses
            assert np.isfinite(losses.total)
            assert losses.inter >= 0.0 and losses.align >= 0.0 and losses.std >= 0.0

    def test_teachers_are_unchanged(self, teachers, blobs, small_config):
        before = [parameter_digest(t) for t in teachers]
        metrics = amalgamate(teachers, blobs, small_config).metrics
        assert metrics.teachers_unchanged()
        assert [parameter_digest(t) for t in teachers] == before

    def test_same_seed_same_summary(self, teachers, blobs, small_config, label_space):
        first = amalgamate(teachers, blobs, small_config, eval_dataset=blobs[1], label_space=label_space)
        second = amalgamate(teachers, blobs, small_config, eval_dataset=blobs[1], label_space=label_space)
        assert first.metrics.summary() == second.metrics.summary()
        assert parameter_digest(first.student) == parameter_digest(second.student)

    def test_zero_weight_component_is_never_built(self, teachers, blobs, small_config):
        # 5 channels divide none of the feature widths, so building the inter term would fail
        skipped = replace(small_config, inter_metric="mmd-spatial", spatial_channels=5).with_weights(lambda_inter=0.0)
        reference = replace(small_config, inter_metric="cosine").with_weights(lambda_inter=0.0)
        first = amalgamate(teachers, blobs, skipped)
        second = amalgamate(teachers, blobs, reference)
        assert first.metrics.loss_trace == second.metrics.loss_trace
        assert all(record.losses.inter == 0.0 for record in first.metrics.epochs)
        assert parameter_digest(first.student) == parameter_digest(second.student)

    def test_kd_is_the_zeroed_objective(self, teachers, blobs, small_config):
        zeroed = replace(small_config, target_mode="concatenated-logits").with_weights(
            lambda_intra=0.0, lambda_inter=0.0, lambda_align=0.0, lambda_std=1.0
        )
        kd = amalgamate(teachers, blobs, kd_config(small_config))
        cka = amalgamate(teachers, blobs, zeroed)
        assert kd.metrics.loss_trace == cka.metrics.loss_trace
        for record in kd.metrics.epochs:
            assert record.losses.total == pytest.approx(record.losses.std)

    def test_cfl_drops_both_contrasts(self, small_config):
        weights = cfl_config(small_config).weights
        assert weights.lambda_intra == weights.lambda_inter == 0.0
        assert weights.lambda_align == LossWeights().lambda_align

    def test_intra_only_loss_decreases(self, teachers, blobs, small_config):
        config = replace(small_config, epochs=5, lr=5e-3).with_weights(
            lambda_intra=1.0, lambda_inter=0.0, lambda_align=0.0, lambda_std=0.0
        )
        metrics = amalgamate(teachers, blobs, config).metrics
        trace = metrics.loss_trace
        assert len(trace) == 5
        assert trace[-1] < trace[0]
        assert all(record.losses.std == 0.0 and record.losses.align == 0.0 for record in metrics.epochs)

    @pytest.mark.slow
    def test_single_teacher_kd_agrees_with_teacher(self, blobs, pretrain_config):
        train, _ = blobs
        everything = TaskSpec("teacher0", (0, 1, 2, 3), (0, 4))
        teacher = pretrain_teacher(everything, train, pretrain_config, STUDENT_WIDTHS)
        config = AmalgamationConfig(batch_size=16, epochs=20, lr=5e-3, seed=0, adapter_channels=16, common_dim=8)
        config = config.with_weights(lambda_intra=0.0, lambda_inter=0.0, lambda_align=0.0, lambda_std=1.0)
        student = amalgamate([teacher], blobs, config).student

        pool = train.samples
        taught = teacher_predictor(teacher, 4)(pool).argmax(axis=1)
        learned = student_predictor(student)(pool).argmax(axis=1)
        assert np.mean(taught == learned) >= 0.9

    def test_gw_diagnostic_is_logged(self, teachers, blobs, small_config):
        config = replace(small_config, log_gw_diagnostic=True, epochs=1)
        record = amalgamate(teachers, blobs, config).metrics.epochs[0]
        assert record.gw_diagnostic is not None and record.gw_diagnostic >= 0.0

    def test_infonce_variant_trains(self, teachers, blobs, small_config):
        config = replace(small_config, intra_loss="infonce", epochs=1)
        assert np.isfinite(amalgamate(teachers, blobs, config).metrics.final.losses.intra)

    @pytest.mark.integration
    def test_output_directory(self, teachers, blobs, small_config, label_space, tmp_path):
        result = amalgamate(
            teachers, blobs, small_config, eval_dataset=blobs[1], label_space=label_space, output_dir=tmp_path
        )
        lines = read_metrics(tmp_path / "metrics.jsonl")
        assert [line["epoch"] for line in lines] == list(range(small_config.epochs))
        assert set(lines[0]["losses"]) >= {"intra", "inter", "align", "std", "total"}
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary == json.loads(json.dumps(result.metrics.summary()))
        assert (tmp_path / "student" / MANIFEST_NAME).exists()
        assert (tmp_path / "common" / MANIFEST_NAME).exists()
        restored = load_checkpoint(tmp_path / "student")
        assert parameter_digest(restored) == parameter_digest(result.student)
        report = evaluate_union(student_predictor(restored), blobs[1], label_space)
        assert report.accuracy == result.metrics.final.acc_union


class TestEvaluation:
    @pytest.mark.slow
    def test_supervised_reference(self, blobs, label_space, pretrain_config):
        student = supervised_baseline(blobs[0], label_space, pretrain_config, widths=STUDENT_WIDTHS)
        report = evaluate_union(student_predictor(student), blobs[1], label_space)
        assert report.accuracy >= 0.9
        assert len(report.task_accuracy) == 2

    def test_wrong_predictor_shape(self, blobs, label_space):
        with pytest.raises(DataFormatError):
            evaluate_union(lambda x: np.zeros((len(x), 3)), blobs[1], label_space)

    def test_per_task_accuracy(self, blobs, label_space):
        truth = label_space.to_slots(blobs[1].labels)

        def oracle(x):
            scores = np.zeros((len(x), 4))
            scores[np.arange(len(x)), truth[: len(x)]] = 1.0
            return scores

        report = evaluate_union(oracle, blobs[1], label_space)
        assert report.accuracy == 1.0
        assert report.task_accuracy == [1.0, 1.0]
        assert report.count == len(blobs[1])
