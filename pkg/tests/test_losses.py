"""
Tests for the contrastive, transport, alignment and distillation losses.
"""

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist
from scipy.stats import ortho_group

from amalgam.core.errors import ConfigError, DataFormatError, DegenerateInputError, NonFiniteError, ShapeError
from amalgam.core.tensor import Tensor, normalize_rows, softmax
from amalgam.losses.alignment import KernelBank, alignment_loss, mmd_sq
from amalgam.losses.contrastive import cosine_similarity, info_nce_loss, intra_margin_loss, pairwise_cosine
from amalgam.losses.distill import (
    TeacherBlock,
    concatenated_logit_target,
    distill_to_target,
    kl_divergence,
    renormalized_target,
    soft_target_loss,
    validate_slot_ranges,
)
from amalgam.losses.gradcases import GRADIENT_CASES, case_rng, run_gradient_checks
from amalgam.losses.objective import LossWeights, total_loss
from amalgam.losses.transport import (
    GW_MAX_BATCH,
    DistanceMetric,
    gw_discrepancy,
    gw_discrepancy_bruteforce,
    inter_contrast_loss,
    pairwise_distance_matrix,
    transport_map,
)


def unit_rows(rng, batch, dim):
    return normalize_rows(Tensor(rng.normal(size=(batch, dim))))


class TestContrastive:
    def test_cosine_similarity(self):
        assert cosine_similarity(Tensor([1.0, 2.0]), Tensor([2.0, 4.0])).item() == pytest.approx(1.0)
        assert cosine_similarity(Tensor([1.0, 0.0]), Tensor([0.0, 3.0])).item() == pytest.approx(0.0)
        with pytest.raises(DegenerateInputError):
            cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))

    def test_pairwise_cosine_matches_scipy(self, rng):
        a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        expected = 1.0 - cdist(a, b, "cosine")
        np.testing.assert_allclose(pairwise_cosine(Tensor(a), Tensor(b)).values, expected, atol=1e-12)

    def test_info_nce_matches_reference(self, rng):
        z_a, z_b = unit_rows(rng, 5, 4), unit_rows(rng, 5, 4)
        logits = z_a.values @ z_b.values.T / 0.5
        log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        expected = -np.mean(np.diag(log_probs))
        assert info_nce_loss(z_a, z_b, 0.5).item() == pytest.approx(expected, rel=1e-12)

    def test_info_nce_temperature_must_be_positive(self, rng):
        z = unit_rows(rng, 3, 2)
        with pytest.raises(ValueError):
            info_nce_loss(z, z, 0.0)

    def test_info_nce_single_row(self):
        z = Tensor([[0.6, 0.8]])
        assert info_nce_loss(z, z, 0.5).item() == pytest.approx(0.0, abs=1e-12)

    def test_intra_margin_identical_single_row(self):
        z = Tensor([[0.6, 0.8]])
        assert intra_margin_loss(z, z, alpha=0.4).item() == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("reduction,expected", [("mean", 0.5), ("sum", 1.0)])
    def test_intra_margin_reductions(self, reduction, expected):
        z = Tensor(np.eye(3))
        assert intra_margin_loss(z, z, alpha=-0.5, reduction=reduction).item() == pytest.approx(expected)

    def test_negatives_below_margin_carry_no_gradient(self):
        z1 = Tensor(np.eye(3), requires_grad=True)
        z2 = Tensor(np.eye(3))
        loss = intra_margin_loss(z1, z2, alpha=0.4)
        assert loss.item() == pytest.approx(0.0)
        loss.backward()
        np.testing.assert_allclose(z1.grad, -np.eye(3) / 3.0)

    def test_unknown_reduction(self):
        z = Tensor(np.eye(2))
        with pytest.raises(ValueError):
            intra_margin_loss(z, z, 0.4, reduction="max")

    def test_view_shapes_must_match(self, rng):
        with pytest.raises(ShapeError):
            intra_margin_loss(unit_rows(rng, 3, 2), unit_rows(rng, 4, 2), 0.4)


class TestDistanceMatrices:
    def test_euclidean_matches_scipy(self, rng):
        x = rng.normal(size=(6, 5))
        d = pairwise_distance_matrix(Tensor(x), "euclidean").values
        np.testing.assert_allclose(d, cdist(x, x), atol=1e-7)
        assert np.all(np.diag(d) == 0.0)
        np.testing.assert_allclose(d, d.T, atol=1e-12)

    def test_cosine_matches_scipy(self, rng):
        x = rng.normal(size=(5, 3))
        d = pairwise_distance_matrix(Tensor(x), DistanceMetric.COSINE).values
        expected = cdist(x, x, "cosine")
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_allclose(d, expected, atol=1e-12)

    def test_identical_rows_give_zero_matrix(self):
        x = Tensor(np.tile([[1.0, -2.0, 0.5]], (4, 1)))
        np.testing.assert_allclose(pairwise_distance_matrix(x, "euclidean").values, np.zeros((4, 4)), atol=1e-6)
        np.testing.assert_allclose(pairwise_distance_matrix(x, "cosine").values, np.zeros((4, 4)), atol=1e-12)

    def test_permutation_equivariance(self, rng):
        x = rng.normal(size=(7, 4))
        perm = rng.permutation(7)
        d = pairwise_distance_matrix(Tensor(x)).values
        d_perm = pairwise_distance_matrix(Tensor(x[perm])).values
        np.testing.assert_allclose(d_perm, d[np.ix_(perm, perm)], atol=1e-12)

    def test_euclidean_isometry_invariance(self, rng):
        x = rng.normal(size=(6, 4))
        rotation = ortho_group.rvs(4, random_state=1)
        moved = x @ rotation + rng.normal(size=(1, 4))
        np.testing.assert_allclose(
            pairwise_distance_matrix(Tensor(moved)).values, pairwise_distance_matrix(Tensor(x)).values, atol=1e-8
        )

    def test_mmd_spatial_needs_factorization(self, rng):
        x = Tensor(rng.normal(size=(3, 10)))
        with pytest.raises(ShapeError):
            pairwise_distance_matrix(x, "mmd-spatial")
        with pytest.raises(ShapeError):
            pairwise_distance_matrix(x, "mmd-spatial", spatial_channels=4)

    def test_mmd_spatial_is_a_distance_matrix(self, rng):
        d = pairwise_distance_matrix(Tensor(rng.normal(size=(4, 16))), "mmd-spatial", spatial_channels=4).values
        assert d.shape == (4, 4)
        assert np.all(d >= 0.0)
        assert np.all(np.diag(d) == 0.0)
        np.testing.assert_allclose(d, d.T, atol=1e-12)

    def test_unknown_metric(self, rng):
        with pytest.raises(ValueError):
            pairwise_distance_matrix(Tensor(rng.normal(size=(3, 2))), "manhattan")


class TestTransport:
    def test_maps_are_row_stochastic(self, rng):
        for metric in ("euclidean", "cosine"):
            pi = transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(6, 3))), metric), metric)
            np.testing.assert_allclose(pi.row_sums(), np.ones(6), atol=1e-12)
            assert pi.violations() == []

    @pytest.mark.parametrize("metric", ["euclidean", "cosine"])
    def test_random_batches_hold_map_invariants(self, metric):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            batch, dim = int(rng.integers(2, 17)), int(rng.integers(1, 9))
            x = rng.normal(size=(batch, dim))
            pi = transport_map(pairwise_distance_matrix(Tensor(x), metric), metric)
            assert pi.violations() == []

            perm = rng.permutation(batch)
            permuted = transport_map(pairwise_distance_matrix(Tensor(x[perm]), metric), metric)
            np.testing.assert_allclose(permuted.pi.values, pi.pi.values[np.ix_(perm, perm)], atol=1e-12)

    def test_inter_contrast_invariant_to_rigid_motion(self):
        rng = np.random.default_rng(5)
        for trial in range(100):
            batch, dim = int(rng.integers(2, 17)), int(rng.integers(2, 7))
            x = rng.normal(size=(batch, dim))
            rotation = ortho_group.rvs(dim, random_state=trial)
            moved = x @ rotation + rng.normal(size=(1, dim))
            teachers = [
                transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(batch, 5))))) for _ in range(2)
            ]
            before = inter_contrast_loss(transport_map(pairwise_distance_matrix(Tensor(x))), teachers).item()
            after = inter_contrast_loss(transport_map(pairwise_distance_matrix(Tensor(moved))), teachers).item()
            assert abs(before - after) <= 1e-9

    def test_two_identical_points_split_evenly(self):
        x = Tensor([[1.0, 2.0], [1.0, 2.0]])
        pi = transport_map(pairwise_distance_matrix(x))
        np.testing.assert_allclose(pi.pi.values, np.full((2, 2), 0.5), atol=1e-6)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            transport_map(Tensor(np.zeros((2, 3))))

    def test_inter_contrast_is_additive_over_teachers(self, rng):
        student = transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(5, 4)))))
        first = transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(5, 6)))))
        second = transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(5, 3)))))
        joint = inter_contrast_loss(student, [first, second]).item()
        separate = inter_contrast_loss(student, [first]).item() + inter_contrast_loss(student, [second]).item()
        assert joint == pytest.approx(separate, rel=1e-12)
        assert joint >= 0.0

    def test_inter_contrast_single_row(self):
        pi = transport_map(Tensor([[0.0]]))
        assert inter_contrast_loss(pi, [pi]).item() == pytest.approx(0.0, abs=1e-12)

    def test_inter_contrast_validation(self, rng):
        student = transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(4, 2)))))
        other = transport_map(pairwise_distance_matrix(Tensor(rng.normal(size=(3, 2)))))
        with pytest.raises(DegenerateInputError):
            inter_contrast_loss(student, [])
        with pytest.raises(ShapeError):
            inter_contrast_loss(student, [other])

    def test_gradient_reaches_student_only(self, rng):
        features = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        teacher = Tensor(rng.normal(size=(4, 5)))
        loss = inter_contrast_loss(
            transport_map(pairwise_distance_matrix(features)), [transport_map(pairwise_distance_matrix(teacher))]
        )
        loss.backward()
        assert features.grad is not None and np.any(features.grad != 0.0)
        assert teacher.grad is None


def random_instance(rng, n, m):
    dx = cdist(*(2 * [rng.normal(size=(n, 3))]))
    dy = cdist(*(2 * [rng.normal(size=(m, 2))]))
    pi = rng.random(size=(n, m))
    return dx, dy, pi / pi.sum()


class TestGromovWasserstein:
    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(0, 2**16),
        n=st.integers(1, 8),
        m=st.integers(1, 8),
        q=st.sampled_from([1.0, 2.0, 3.0]),
    )
    def test_matches_bruteforce(self, seed, n, m, q):
        dx, dy, pi = random_instance(np.random.default_rng(seed), n, m)
        assert abs(gw_discrepancy(dx, dy, pi, q) - gw_discrepancy_bruteforce(dx, dy, pi, q)) <= 1e-10

    def test_identical_spaces_under_identity_coupling(self, rng):
        dx = cdist(*(2 * [rng.normal(size=(5, 3))]))
        assert gw_discrepancy(dx, dx, np.eye(5) / 5) == pytest.approx(0.0, abs=1e-12)

    def test_validation(self, rng):
        dx, dy, pi = random_instance(rng, 3, 3)
        with pytest.raises(ValueError):
            gw_discrepancy(dx, dy, -pi)
        with pytest.raises(ValueError):
            gw_discrepancy(dx, dy, pi, q=0.0)
        with pytest.raises(ShapeError):
            gw_discrepancy(dx, dy, pi[:2])
        big = np.zeros((GW_MAX_BATCH + 1, GW_MAX_BATCH + 1))
        with pytest.raises(ShapeError):
            gw_discrepancy(big, big, big)


class TestAlignment:
    def test_identical_sets(self, rng):
        f = Tensor(rng.normal(size=(6, 4)))
        assert abs(mmd_sq(f, f).item()) <= 1e-9

    def test_non_negative(self, rng):
        for _ in range(5):
            f_s = Tensor(rng.normal(size=(5, 3)))
            f_t = Tensor(rng.normal(loc=0.3, size=(7, 3)))
            assert mmd_sq(f_s, f_t).item() >= -1e-12

    def test_identical_teacher_adds_nothing(self, rng):
        f_s = Tensor(rng.normal(size=(6, 4)))
        f_t = Tensor(rng.normal(loc=1.0, size=(6, 4)))
        assert alignment_loss(f_s, [f_s, f_t]).item() == pytest.approx(mmd_sq(f_s, f_t).item(), abs=1e-12)

    def test_validation(self, rng):
        with pytest.raises(ShapeError):
            mmd_sq(Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 4))))
        with pytest.raises(DegenerateInputError):
            mmd_sq(Tensor(np.zeros((0, 2))), Tensor(rng.normal(size=(3, 2))))
        with pytest.raises(DegenerateInputError):
            alignment_loss(Tensor(rng.normal(size=(3, 2))), [])

    def test_kernel_bank_validation(self):
        assert KernelBank(bandwidths=(1.0, 2.0)).coefficients == (0.5, 0.5)
        with pytest.raises(ValueError):
            KernelBank(bandwidths=(0.0,))
        with pytest.raises(ValueError):
            KernelBank(bandwidths=(1.0, 2.0), coefficients=(1.0,))
        with pytest.raises(ValueError):
            KernelBank(bandwidths=(1.0, 2.0), coefficients=(0.7, 0.7))

    def test_median_heuristic_scales(self, rng):
        points = rng.normal(size=(8, 3))
        bank = KernelBank.median_heuristic(points)
        median = np.median(cdist(points, points)[np.triu_indices(8, k=1)])
        np.testing.assert_allclose(bank.bandwidths, [median * s for s in (0.25, 0.5, 1.0, 2.0, 4.0)])

    def test_median_heuristic_degenerate_falls_back(self, caplog):
        with caplog.at_level(logging.WARNING):
            bank = KernelBank.median_heuristic(np.ones((4, 2)))
        assert bank.bandwidths == (0.25, 0.5, 1.0, 2.0, 4.0)
        assert "median pairwise distance is zero" in caplog.text


class TestDistillation:
    def test_slot_ranges(self):
        validate_slot_ranges([(2, 4), (0, 2)], 4)
        with pytest.raises(DataFormatError):
            validate_slot_ranges([(0, 3), (2, 4)], 4)
        with pytest.raises(DataFormatError):
            validate_slot_ranges([(0, 1), (2, 4)], 4)
        with pytest.raises(DataFormatError):
            validate_slot_ranges([(0, 2)], 4)

    def test_renormalized_target(self, rng):
        blocks = [
            TeacherBlock(softmax(Tensor(rng.normal(size=(3, 2)))).values, (0, 2)),
            TeacherBlock(softmax(Tensor(rng.normal(size=(3, 3)))).values, (2, 5)),
        ]
        target = renormalized_target(blocks, 5)
        np.testing.assert_allclose(target.sum(axis=1), np.ones(3))
        np.testing.assert_allclose(target[:, :2], blocks[0].values / 2)

    def test_block_placement_follows_slots(self, rng):
        first = softmax(Tensor(rng.normal(size=(2, 2)))).values
        second = softmax(Tensor(rng.normal(size=(2, 2)))).values
        forward = renormalized_target([TeacherBlock(first, (0, 2)), TeacherBlock(second, (2, 4))], 4)
        swapped = renormalized_target([TeacherBlock(second, (2, 4)), TeacherBlock(first, (0, 2))], 4)
        np.testing.assert_array_equal(forward, swapped)

    def test_concatenated_logit_target(self, rng):
        a, b = rng.normal(size=(2, 2)), rng.normal(size=(2, 3))
        target = concatenated_logit_target([TeacherBlock(a, (0, 2)), TeacherBlock(b, (2, 5))], 5)
        np.testing.assert_allclose(target, softmax(Tensor(np.hstack([a, b]))).values)

    def test_rejects_non_probability_blocks(self):
        with pytest.raises(DataFormatError):
            renormalized_target([TeacherBlock(np.array([[0.7, 0.7]]), (0, 2))], 2)
        with pytest.raises(ShapeError):
            TeacherBlock(np.ones((2, 3)), (0, 2))

    def test_kl_of_identical_distributions(self, rng):
        p = softmax(Tensor(rng.normal(size=(4, 3))))
        assert kl_divergence(p, p).item() == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("direction", ["student-first", "teacher-first"])
    def test_matching_student_has_zero_loss(self, rng, direction):
        target = softmax(Tensor(rng.normal(size=(3, 4)))).values
        loss = distill_to_target(Tensor(np.log(target)), target, direction=direction)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_directions_differ(self, rng):
        target = softmax(Tensor(rng.normal(size=(3, 4)))).values
        logits = Tensor(rng.normal(size=(3, 4)))
        forward = distill_to_target(logits, target, direction="student-first").item()
        reverse = distill_to_target(logits, target, direction="teacher-first").item()
        assert forward > 0.0 and reverse > 0.0
        assert forward != pytest.approx(reverse)

    def test_soft_target_loss_validation(self, rng):
        block = TeacherBlock(softmax(Tensor(rng.normal(size=(2, 3)))).values, (0, 3))
        with pytest.raises(ValueError):
            soft_target_loss(Tensor(rng.normal(size=(2, 3))), [block], temperature=0.0)
        with pytest.raises(DataFormatError):
            soft_target_loss(Tensor(rng.normal(size=(2, 4))), [block])


class TestObjective:
    def test_ledger(self, rng):
        weights = LossWeights(lambda_intra=0.5, lambda_inter=2.0, lambda_align=10.0, lambda_std=1.0)
        components = {name: Tensor(rng.random(), requires_grad=True) for name in ("intra", "inter", "align", "std")}
        breakdown = total_loss(components, weights)
        assert breakdown.ledger_error(weights) == 0.0
        assert breakdown.objective.item() == pytest.approx(breakdown.total, rel=1e-12)

    def test_missing_components_count_as_zero(self):
        weights = LossWeights()
        breakdown = total_loss({"std": 0.25, "inter": None}, weights)
        assert breakdown.intra == breakdown.inter == breakdown.align == 0.0
        assert breakdown.total == pytest.approx(0.25)
        assert breakdown.objective is None

    def test_non_finite_component_is_named(self):
        with pytest.raises(NonFiniteError) as info:
            total_loss({"inter": float("nan")}, LossWeights())
        assert info.value.component == "inter"

    def test_unknown_component(self):
        with pytest.raises(KeyError):
            total_loss({"margin": 1.0}, LossWeights())

    def test_weight_validation(self):
        with pytest.raises(ConfigError) as info:
            LossWeights(lambda_intra=-1.0)
        assert info.value.key_path == "lambda_intra"
        with pytest.raises(ConfigError):
            LossWeights(margin=1.5)
        with pytest.raises(ConfigError):
            LossWeights(temperature=0.0)
        with pytest.raises(ConfigError):
            LossWeights.from_dict({"lambda_bogus": 1.0})


def _intra_example():
    a = [1.0, 0.0]
    b = [0.9, np.sqrt(0.19)]
    z = Tensor([a, b])
    return z, z


WORKED_EXAMPLES = {
    "info_nce": (lambda: info_nce_loss(Tensor(np.eye(2)), Tensor(np.eye(2)), 1.0).item(), 0.31326168),
    "intra_mean": (lambda: intra_margin_loss(*_intra_example(), 0.4).item(), 0.5),
    "intra_sum": (lambda: intra_margin_loss(*_intra_example(), 0.4, reduction="sum").item(), 0.5),
    "uniform_maps_inter": (
        lambda: inter_contrast_loss(
            transport_map(Tensor(np.zeros((2, 2)))), [transport_map(Tensor(np.zeros((2, 2))))]
        ).item(),
        1.0,
    ),
    "mmd_singletons": (
        lambda: mmd_sq(Tensor([[0.0, 0.0]]), Tensor([[1.0, 1.0]]), KernelBank.single(1.0)).item(),
        1.26424112,
    ),
    "mmd_singletons_swapped": (
        lambda: mmd_sq(Tensor([[1.0, 1.0]]), Tensor([[0.0, 0.0]]), KernelBank.single(1.0)).item(),
        1.26424112,
    ),
    "kl_point_mass_vs_uniform": (
        lambda: kl_divergence(Tensor([[1.0, 0.0]]), Tensor([[0.5, 0.5]])).item(),
        float(np.log(2.0)),
    ),
    "soft_target_point_mass": (
        lambda: soft_target_loss(
            Tensor([[0.0, 0.0]]), [TeacherBlock(np.array([[1.0, 0.0]]), (0, 2))], direction="teacher-first"
        ).item(),
        float(np.log(2.0)),
    ),
    "total_loss": (
        lambda: total_loss({"intra": 0.5, "inter": 1.0, "align": 0.2, "std": 0.7}, LossWeights()).total,
        4.2,
    ),
    "cosine_diagonal": (
        lambda: cosine_similarity(Tensor([1.0, 1.0]), Tensor([1.0, 0.0])).item(),
        0.7071067811865475,
    ),
    "gw_collapsed_target": (
        lambda: gw_discrepancy(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)), np.full((2, 2), 0.25)),
        0.5,
    ),
}


class TestWorkedExamples:
    @pytest.mark.parametrize("name", sorted(WORKED_EXAMPLES))
    def test_value(self, name):
        compute, expected = WORKED_EXAMPLES[name]
        assert compute() == pytest.approx(expected, abs=1e-8)

    def test_transport_rows(self):
        pi = transport_map(Tensor([[0.0, 1.0], [1.0, 0.0]])).pi.values
        np.testing.assert_allclose(pi[0], [0.73105858, 0.26894142], atol=1e-8)
        np.testing.assert_allclose(pi[1], [0.26894142, 0.73105858], atol=1e-8)

    def test_saturated_student_against_uniform_target(self):
        value = distill_to_target(Tensor([[50.0, 0.0]]), np.array([[0.5, 0.5]])).item()
        assert value == pytest.approx(np.log(2.0), abs=1e-9)


class TestGradientCases:
    def test_every_loss_passes(self):
        results = run_gradient_checks(configurations=3, seed=0)
        assert [r.name for r in results] == list(GRADIENT_CASES)
        for result in results:
            assert result.passed, f"{result.name}: {result.max_error:.3e}"

    @pytest.mark.slow
    def test_every_loss_passes_ten_configurations(self):
        results = run_gradient_checks(configurations=10, seed=0)
        failed = [f"{r.name}: {r.max_error:.3e}" for r in results if not r.passed]
        assert len(results) == len(GRADIENT_CASES)
        assert failed == []

    def test_case_points_depend_on_name(self):
        assert case_rng(0, "intra").random() != case_rng(0, "inter").random()
        assert case_rng(3, "align").random() == case_rng(3, "align").random()

    def test_unknown_case(self):
        with pytest.raises(KeyError):
            run_gradient_checks(["nope"])
