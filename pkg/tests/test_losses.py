import numpy as np
import pytest

from gcecal.errors import InvalidInputError
from gcecal.losses import (
    LossKind,
    LossSpec,
    aggregated_confidence,
    brier,
    class_counts,
    cross_entropy,
    focal,
    focal_gce,
    gce,
    gce_label_smoothed,
    gce_prob_gradient,
    loss_and_grad,
    project_rows_to_simplex,
    verify_strict_properness,
)
from gcecal.numerics import softmax

from helpers import assert_grad_close, fd_logit_gradient, random_logits

ALL_SPECS = [
    LossSpec(LossKind.CE),
    LossSpec(LossKind.GCE),
    LossSpec(LossKind.GCE_LS, alpha=0.1),
    LossSpec(LossKind.FOCAL, gamma=2.0),
    LossSpec(LossKind.FOCAL, gamma=0.5),
    LossSpec(LossKind.FOCAL_GCE, gamma=2.0),
    LossSpec(LossKind.BRIER),
]


class TestGradientSuite:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind.value}-a{s.alpha}-g{s.gamma}")
    def test_matches_finite_differences(self, spec):
        rng = np.random.default_rng(42)
        for _ in range(10):
            n, k = int(rng.integers(1, 17)), int(rng.integers(2, 11))
            z, y = random_logits(rng, n, k)
            _, grad = loss_and_grad(z, y, spec)
            fd = fd_logit_gradient(lambda zz: loss_and_grad(zz, y, spec)[0], z)
            assert_grad_close(grad, fd)

    def test_ce_grad_closed_form(self):
        rng = np.random.default_rng(0)
        z, y = random_logits(rng, 6, 4)
        _, grad = cross_entropy(z, y)
        expected = softmax(z)
        expected[np.arange(6), y] -= 1.0
        np.testing.assert_allclose(grad, expected / 6.0, atol=1e-15)


class TestCrossEntropy:
    def test_uniform_rows(self):
        loss, _ = cross_entropy(np.zeros((4, 10)), [0, 3, 5, 9])
        np.testing.assert_allclose(loss, np.log(10), atol=1e-12)

    def test_saturated_onehot_limit(self):
        z = np.array([[80.0, 0.0], [0.0, 80.0]])
        loss, grad = cross_entropy(z, [0, 1])
        assert loss < 1e-12
        assert np.abs(grad).max() < 1e-12

    def test_two_sample_value(self):
        # oracle: 50-digit evaluation of log(1 + e^-1)
        loss, _ = cross_entropy(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
        np.testing.assert_allclose(loss, 0.31326168751822283, atol=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(InvalidInputError):
            cross_entropy(np.zeros((2, 3)), [0, 3])


class TestGce:
    def test_single_sample_is_zero(self):
        loss, _ = gce(np.array([[3.0, -1.0, 0.5]]), [2])
        assert abs(loss) < 1e-12

    def test_uniform_rows_log_n(self):
        for n in (2, 5, 9):
            loss, _ = gce(np.zeros((n, 4)), np.zeros(n, dtype=int))
            np.testing.assert_allclose(loss, np.log(n), atol=1e-12)

    def test_decomposition_identity(self):
        # the log-ratio form must equal cross-entropy plus the count-weighted
        # log of per-class aggregated confidence, evaluated independently
        rng = np.random.default_rng(7)
        for _ in range(100):
            n, k = int(rng.integers(2, 65)), int(rng.integers(2, 11))
            z, y = random_logits(rng, n, k, scale=3.0)
            gce_value, _ = gce(z, y)
            ce_value, _ = cross_entropy(z, y)
            counts = class_counts(y, k)
            agg = aggregated_confidence(softmax(z))
            reg = sum(counts[c] * np.log(agg[c]) for c in range(k) if counts[c] > 0) / n
            assert abs(gce_value - (ce_value + reg)) < 1e-10

    def test_empty_batch_rejected(self):
        with pytest.raises(InvalidInputError):
            gce(np.zeros((0, 3)), [])


class TestGceLabelSmoothed:
    def test_alpha_zero_reduces_to_gce(self):
        rng = np.random.default_rng(8)
        z, y = random_logits(rng, 6, 3)
        l0, g0 = gce_label_smoothed(z, y, 0.0)
        l1, g1 = gce(z, y)
        assert abs(l0 - l1) < 1e-12
        np.testing.assert_allclose(g0, g1, atol=1e-12)

    def test_single_sample_zero_any_alpha(self):
        for alpha in (0.0, 0.3, 0.9):
            loss, _ = gce_label_smoothed(np.array([[1.0, -2.0]]), [0], alpha)
            assert abs(loss) < 1e-12

    def test_value_against_double_loop(self):
        rng = np.random.default_rng(9)
        z, y = random_logits(rng, 4, 2)
        alpha = 0.1
        p = softmax(z)
        col = p.sum(axis=0)
        n, k = p.shape
        first = -sum(np.log(p[i, y[i]] / col[y[i]]) for i in range(n)) / n
        second = -sum(np.log(p[i, c] / col[c]) for i in range(n) for c in range(k)) / (n * k)
        expected = (1 - alpha) * first + alpha * second
        loss, _ = gce_label_smoothed(z, y, alpha)
        np.testing.assert_allclose(loss, expected, atol=1e-12)

    def test_alpha_out_of_range(self):
        with pytest.raises(InvalidInputError):
            gce_label_smoothed(np.zeros((2, 2)), [0, 1], 1.0)
        with pytest.raises(InvalidInputError):
            gce_label_smoothed(np.zeros((2, 2)), [0, 1], -0.1)


class TestFocal:
    def test_gamma_zero_is_cross_entropy(self):
        rng = np.random.default_rng(10)
        z, y = random_logits(rng, 8, 5)
        lf, gf = focal(z, y, 0.0)
        lc, gc = cross_entropy(z, y)
        assert abs(lf - lc) < 1e-12
        np.testing.assert_allclose(gf, gc, atol=1e-12)

    def test_easy_samples_vanish_faster_than_ce(self):
        z = np.array([[6.0, 0.0]])
        lf, _ = focal(z, [0], 2.0)
        lc, _ = cross_entropy(z, [0])
        assert 0.0 < lf < lc * 1e-4

    def test_quarter_probability_value(self):
        # oracle: 50-digit evaluation of (3/4)^2 * log 4
        z = np.array([[np.log(1.0), np.log(3.0)]])  # softmax -> [0.25, 0.75]
        loss, _ = focal(z, [0], 2.0)
        np.testing.assert_allclose(loss, 0.77979057812993847, atol=1e-12)


class TestFocalGce:
    def test_gamma_zero_reduces_to_gce(self):
        rng = np.random.default_rng(11)
        z, y = random_logits(rng, 6, 3)
        l0, g0 = focal_gce(z, y, 0.0)
        l1, g1 = gce(z, y)
        assert abs(l0 - l1) < 1e-12
        np.testing.assert_allclose(g0, g1, atol=1e-12)

    def test_single_sample_zero(self):
        loss, _ = focal_gce(np.array([[2.0, 0.0, -1.0]]), [1], 2.0)
        assert abs(loss) < 1e-12

    def test_value_against_term_by_term(self):
        rng = np.random.default_rng(12)
        z, y = random_logits(rng, 4, 3)
        p = softmax(z)
        col = p.sum(axis=0)
        expected = -np.mean(
            [(1 - p[i, y[i]]) ** 2 * np.log(p[i, y[i]] / col[y[i]]) for i in range(4)]
        )
        loss, _ = focal_gce(z, y, 2.0)
        np.testing.assert_allclose(loss, expected, atol=1e-12)


class TestBrier:
    def test_saturated_onehot_limit(self):
        loss, _ = brier(np.array([[80.0, 0.0]]), [0])
        assert loss < 1e-12

    def test_uniform_binary(self):
        loss, _ = brier(np.zeros((3, 2)), [0, 1, 0])
        np.testing.assert_allclose(loss, 0.5, atol=1e-12)

    def test_hand_sum(self):
        z = np.log(np.array([[0.2, 0.5, 0.3]]))
        loss, _ = brier(z, [1])
        np.testing.assert_allclose(loss, 0.38, atol=1e-12)


class TestSharedProperties:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind.value}-a{s.alpha}-g{s.gamma}")
    def test_permutation_invariance(self, spec):
        rng = np.random.default_rng(13)
        z, y = random_logits(rng, 12, 4)
        perm = rng.permutation(12)
        base, _ = loss_and_grad(z, y, spec)
        shuffled, _ = loss_and_grad(z[perm], y[perm], spec)
        assert abs(base - shuffled) < 1e-12

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind.value}-a{s.alpha}-g{s.gamma}")
    def test_losses_nonnegative(self, spec):
        rng = np.random.default_rng(14)
        for _ in range(10):
            z, y = random_logits(rng, int(rng.integers(2, 10)), int(rng.integers(2, 6)))
            loss, _ = loss_and_grad(z, y, spec)
            assert loss >= -1e-12

    def test_spec_validation(self):
        with pytest.raises(InvalidInputError):
            LossSpec(LossKind.GCE_LS, alpha=1.0)
        with pytest.raises(InvalidInputError):
            LossSpec(LossKind.FOCAL, gamma=-1.0)


class TestGceProbGradient:
    def test_zero_at_onehot(self):
        p = np.zeros((5, 3))
        y = np.array([0, 1, 2, 0, 1])
        p[np.arange(5), y] = 1.0
        np.testing.assert_array_equal(gce_prob_gradient(p, y), np.zeros(5))

    def test_uniform_rows(self):
        # substitute p = 1/K and column sums N/K: -K + N_y * K / N
        k, n = 4, 8
        p = np.full((n, k), 1.0 / k)
        y = np.repeat(np.arange(k), n // k)
        np.testing.assert_allclose(gce_prob_gradient(p, y), np.full(n, -k + 1.0), atol=1e-12)
        y_skew = np.array([0] * 6 + [1] * 2)
        expected = np.where(y_skew == 0, -k + 6 * k / n, -k + 2 * k / n)
        np.testing.assert_allclose(gce_prob_gradient(p, y_skew), expected, atol=1e-12)

    def test_direct_substitution(self):
        p = np.array([[0.5, 0.5], [0.3, 0.7]])
        y = np.array([0, 1])
        grads = gce_prob_gradient(p, y)
        np.testing.assert_allclose(grads[0], -2.0 + 1.0 / 0.8, atol=1e-12)

    def test_zero_probability_raises(self):
        p = np.array([[0.0, 1.0]])
        with pytest.raises(ZeroDivisionError):
            gce_prob_gradient(p, [0])


class TestSimplexProjection:
    def test_projection_properties(self):
        rng = np.random.default_rng(15)
        v = rng.normal(0, 3, (200, 4))
        p = project_rows_to_simplex(v)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
        assert (p >= 0).all()
        # already-feasible points are fixed
        q = rng.dirichlet(np.ones(4), size=50)
        np.testing.assert_allclose(project_rows_to_simplex(q), q, atol=1e-12)


class TestStrictProperness:
    def test_onehot_targets_recovered(self):
        q = np.zeros((4, 3))
        q[0, 0] = q[1, 1] = q[2, 2] = q[3, 0] = 1.0
        for kind in (LossKind.GCE, LossKind.CE):
            minimizer, dev = verify_strict_properness(q, kind)
            assert dev < 1e-3, f"{kind}: {dev}"

    def test_interior_targets_recovered(self):
        q = np.array([[0.7, 0.3], [0.4, 0.6], [0.9, 0.1]])
        for kind in (LossKind.GCE, LossKind.CE):
            minimizer, dev = verify_strict_properness(q, kind)
            assert dev < 1e-3, f"{kind}: {dev}"
            np.testing.assert_allclose(minimizer, q, atol=1e-3)

    def test_focal_minimizer_departs_from_target(self):
        q = np.array([[0.7, 0.3], [0.4, 0.6], [0.9, 0.1]])
        _, dev = verify_strict_properness(q, LossKind.FOCAL, gamma=2.0)
        assert dev >= 1e-2

    def test_rank_deficient_rejected(self):
        q = np.tile([0.5, 0.5], (3, 1))
        with pytest.raises(InvalidInputError):
            verify_strict_properness(q, LossKind.GCE)

    def test_desk_scale_bounds(self):
        with pytest.raises(InvalidInputError):
            verify_strict_properness(np.full((9, 2), 0.5), LossKind.CE)
