import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from covshift.errors import ValidationError
from covshift.ess import (
    BoundParams,
    GaussianPairSpec,
    empirical_ess,
    gaussian_d2,
    gaussian_log_density,
    generalization_bound,
    mc_d2,
    normalize_weights,
    population_ess,
    self_normalized_estimate,
)


def bound_oracle(ess_star, p, n, delta):
    mpmath.mp.dps = 40
    inner = (p * mpmath.log(2 * mpmath.e * n / p) + mpmath.log(4 / mpmath.mpf(delta))) / n
    return float(mpmath.power(2, mpmath.mpf(5) / 4) / mpmath.sqrt(ess_star) * mpmath.power(inner, mpmath.mpf(3) / 8))


positive_weights = arrays(
    np.float64, st.integers(1, 50), elements=st.floats(1e-3, 1e3, allow_nan=False)
)


class TestEmpiricalEss:
    @pytest.mark.parametrize("c", [1e-9, 0.3, 1.0, 7.0, 1e9])
    @pytest.mark.parametrize("n", [1, 2, 17, 1000])
    def test_uniform_is_exactly_one(self, c, n):
        assert empirical_ess(np.full(n, c)) == 1.0

    def test_one_hot(self):
        assert empirical_ess([1, 0, 0, 0]) == 0.25

    @settings(max_examples=60, deadline=None)
    @given(positive_weights, st.sampled_from([1e-6, 1.0, 1e6, 7.3]))
    def test_scale_invariance(self, w, c):
        assert abs(empirical_ess(c * w) - empirical_ess(w)) <= 1e-12

    @settings(max_examples=60, deadline=None)
    @given(positive_weights)
    def test_bounded_by_one(self, w):
        value = empirical_ess(w)
        assert 0 < value <= 1.0
        if np.ptp(w) > 1e-9 * w.max():
            assert value < 1.0

    @pytest.mark.parametrize("bad", [[], [1.0, -1.0], [0.0, 0.0], [1.0, np.nan], [[1.0]]])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            empirical_ess(np.array(bad, dtype=float))


class TestNormalization:
    def test_examples(self):
        np.testing.assert_array_equal(normalize_weights([2, 2]), [0.5, 0.5])
        np.testing.assert_array_equal(normalize_weights([1, 3]), [0.25, 0.75])
        w = np.array([0.1, 0.2, 0.7])
        np.testing.assert_allclose(normalize_weights(w), w, atol=1e-15)

    def test_self_normalized_estimate(self):
        v = np.array([1.0, 5.0, 9.0])
        assert self_normalized_estimate(v, [1, 1, 1]) == pytest.approx(5.0, abs=1e-15)
        assert self_normalized_estimate(v, [0, 1, 0]) == 5.0

    def test_shifted_mean_from_true_weights(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(100_000)
        w = np.exp(0.5 * x - 0.125)
        assert abs(self_normalized_estimate(x, w) - 0.5) < 0.02


class TestGaussianDivergence:
    def test_isotropic(self):
        assert gaussian_d2(GaussianPairSpec.isotropic_shift(4, 1.0)) == pytest.approx(4.0, abs=1e-12)

    def test_identical(self):
        assert gaussian_d2(GaussianPairSpec(np.zeros(3), np.zeros(3), np.eye(3))) == 0.0

    def test_anisotropic_matches_monte_carlo(self):
        spec = GaussianPairSpec(np.array([1.0, 0.0]), np.zeros(2), np.diag([4.0, 1.0]))
        assert gaussian_d2(spec) == pytest.approx(0.25, abs=1e-12)
        rng = np.random.default_rng(0)
        chol = np.linalg.cholesky(spec.covariance)
        x = spec.mu_p + rng.standard_normal((1_000_000, 2)) @ chol.T
        est = mc_d2(gaussian_log_density(spec.mu_p, spec.covariance),
                    gaussian_log_density(spec.mu_q, spec.covariance), x)
        assert abs(est - 0.25) < 0.01

    def test_rejects_non_spd(self):
        with pytest.raises(ValidationError):
            GaussianPairSpec(np.zeros(2), np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_monotone_in_dimension(self):
        for lam in (0.05, 0.1, 0.25, 0.5):
            d2 = [gaussian_d2(GaussianPairSpec.isotropic_shift(d, lam)) for d in range(1, 33)]
            ess = [population_ess(v) for v in d2]
            assert all(b > a for a, b in zip(d2, d2[1:]))
            assert all(b < a for a, b in zip(ess, ess[1:]))


class TestPopulationEss:
    def test_examples(self):
        assert population_ess(0.0) == 1.0
        assert population_ess(10 * 0.25) == pytest.approx(0.0820850, abs=5e-8)
        assert population_ess(5 * 0.09) == pytest.approx(0.6376282, abs=5e-8)

    @pytest.mark.parametrize("bad", [-0.1, math.inf, math.nan])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            population_ess(bad)


class TestMonteCarloD2:
    def test_equal_densities_exact_zero(self):
        f = gaussian_log_density(np.zeros(2))
        x = np.random.default_rng(0).normal(size=(100, 2))
        assert mc_d2(f, f, x) == 0.0

    def test_gaussian_shift(self):
        lam, d = 0.4, 3
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1_000_000, d)) + lam
        est = mc_d2(gaussian_log_density(np.full(d, lam)), gaussian_log_density(np.zeros(d)), x)
        assert abs(est - d * lam * lam) < 0.02

    def test_single_sample(self):
        lp, lq = gaussian_log_density([1.0]), gaussian_log_density([0.0])
        x = np.array([[0.7]])
        assert mc_d2(lp, lq, x) == pytest.approx(float(lp(x)[0] - lq(x)[0]), abs=1e-14)

    def test_support_violation_cites_index(self):
        def lq(x):
            out = np.zeros(len(x))
            out[2] = -np.inf
            return out

        with pytest.raises(ValidationError, match="sample 2"):
            mc_d2(lambda x: np.zeros(len(x)), lq, np.zeros((4, 1)))

    def test_no_overflow_for_large_ratios(self):
        x = np.zeros((3, 1))
        assert mc_d2(lambda x: np.full(len(x), 800.0), lambda x: np.zeros(len(x)), x) == pytest.approx(800.0)


class TestBound:
    def test_reference_value(self):
        value = generalization_bound(BoundParams(1.0, 1, 1000, 0.05))
        assert abs(value - 0.46651) <= 1e-4
        assert value == pytest.approx(bound_oracle(1.0, 1, 1000, 0.05), rel=1e-13)

    def test_halving_ess_star(self):
        a = generalization_bound(BoundParams(0.8, 3, 500, 0.1))
        b = generalization_bound(BoundParams(0.4, 3, 500, 0.1))
        assert abs(b / a - math.sqrt(2)) < 1e-12

    def test_composed_example(self):
        value = generalization_bound(BoundParams(math.exp(-2.5), 1, 1000, 0.05))
        assert abs(value - 0.46651 * math.exp(1.25)) < 1e-3

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-4, 1.0), st.integers(1, 50), st.integers(50, 10**6), st.floats(1e-6, 0.99))
    def test_matches_high_precision(self, ess_star, p, n, delta):
        value = generalization_bound(BoundParams(ess_star, p, n, delta))
        assert value == pytest.approx(bound_oracle(ess_star, p, n, delta), rel=1e-12)

    def test_monotonicity(self):
        ess = [generalization_bound(BoundParams(e, 2, 1000, 0.05)) for e in (0.1, 0.3, 0.6, 1.0)]
        assert all(b < a for a, b in zip(ess, ess[1:]))
        deltas = [generalization_bound(BoundParams(0.5, 2, 1000, d)) for d in (0.01, 0.05, 0.2, 0.5)]
        assert all(b < a for a, b in zip(deltas, deltas[1:]))

    @pytest.mark.parametrize(
        "args", [(0.0, 1, 10, 0.1), (1.5, 1, 10, 0.1), (0.5, 11, 10, 0.1), (0.5, 1, 10, 0.0), (0.5, 1, 10, 1.0)]
    )
    def test_invalid(self, args):
        with pytest.raises(ValidationError):
            BoundParams(*args)
