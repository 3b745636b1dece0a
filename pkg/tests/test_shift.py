import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covshift.errors import CalibrationError, ValidationError
from covshift.ess import empirical_ess
from covshift.shift import (
    ShiftAssignment,
    allocate,
    calibrate_sigma,
    compute_scores,
    sample_direction,
    std_normal_cdf,
    true_weights,
)


class TestNormalCdf:
    def test_center(self):
        assert std_normal_cdf(0.0) == 0.5

    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0, 5.0])
    def test_symmetry(self, x):
        assert abs(std_normal_cdf(-x) - (1 - std_normal_cdf(x))) <= 1e-12

    def test_quantile(self):
        assert abs(std_normal_cdf(1.959964) - 0.975) <= 1e-6

    @settings(max_examples=80, deadline=None)
    @given(st.floats(-30, 30))
    def test_matches_high_precision(self, x):
        assert abs(std_normal_cdf(x) - float(mpmath.ncdf(x))) <= 1e-10

    def test_vectorized(self):
        np.testing.assert_array_equal(std_normal_cdf(np.zeros(3)), 0.5)


class TestDirection:
    def test_range_and_mean(self):
        u = sample_direction(10_000, np.random.default_rng(0))
        assert u.min() >= -1 and u.max() <= 1
        assert abs(u.mean()) <= 0.03

    def test_deterministic(self):
        a = sample_direction(5, np.random.default_rng(3))
        np.testing.assert_array_equal(a, sample_direction(5, np.random.default_rng(3)))

    def test_dimension(self):
        with pytest.raises(ValidationError):
            sample_direction(0, np.random.default_rng(0))


class TestScores:
    def test_median_row_scores_half(self):
        X = np.arange(5.0)[:, None]
        assert compute_scores(X, [1.0], 1.0)[2] == 0.5

    def test_lower_median_for_even_n(self):
        X = np.arange(4.0)[:, None]
        assert compute_scores(X, [1.0], 1.0)[1] == 0.5

    def test_flat_limit(self):
        X = np.random.default_rng(0).normal(size=(100, 3))
        s = compute_scores(X, [0.3, -0.2, 0.9], 1e9)
        assert np.all(np.abs(s - 0.5) <= 1e-6)

    def test_monotone_in_projection(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 2))
        u = np.array([0.4, -0.7])
        order = np.argsort(X @ u)
        assert np.all(np.diff(compute_scores(X, u, 0.5)[order]) >= 0)

    def test_clipping(self):
        s = compute_scores(np.array([[-100.0], [0.0], [100.0]]), [1.0], 1e-3)
        assert s[0] == 1e-12 and s[2] == 1 - 1e-12

    def test_zero_direction(self):
        with pytest.raises(ValidationError):
            compute_scores(np.ones((3, 2)), [0.0, 0.0], 1.0)

    def test_nonpositive_sigma(self):
        with pytest.raises(ValidationError):
            compute_scores(np.ones((3, 1)), [1.0], 0.0)


class TestAllocation:
    def test_half_scores(self):
        n = 10_000
        mask = allocate(np.full(n, 0.5), np.random.default_rng(0))
        assert abs(mask.mean() - 0.5) <= 4 / math.sqrt(n)

    def test_near_certain(self):
        assert allocate(np.full(1000, 1 - 1e-12), np.random.default_rng(1)).all()

    def test_deterministic(self):
        s = np.random.default_rng(2).random(50)
        np.testing.assert_array_equal(allocate(s, np.random.default_rng(4)), allocate(s, np.random.default_rng(4)))


class TestTrueWeights:
    def test_examples(self):
        np.testing.assert_allclose(true_weights([0.5, 0.8, 0.2]), [1.0, 0.25, 4.0], rtol=1e-14)

    @pytest.mark.parametrize("bad", [0.0, 1.0])
    def test_boundary_rejected(self, bad):
        with pytest.raises(ValidationError):
            true_weights([bad])


def gaussian_rows(seed, n=8000, d=8):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng


class TestCalibration:
    def test_reaches_target(self):
        X, rng = gaussian_rows(0)
        a = calibrate_sigma(X, sample_direction(8, rng), rng)
        assert empirical_ess(a.true_weights_train) < 0.01
        assert a.ess == empirical_ess(a.true_weights_train)

    def test_sharper_gate_lowers_ess(self):
        hits = 0
        for seed in range(20):
            X, rng = gaussian_rows(seed, n=2000)
            u = sample_direction(8, rng)
            sigma0 = float(np.std(X @ u, ddof=1))
            ess = []
            for sigma in (sigma0, sigma0 / 2**6):
                s = compute_scores(X, u, sigma)
                mask = allocate(s, rng)
                ess.append(empirical_ess(true_weights(s[mask])))
            hits += ess[0] >= ess[1]
        assert hits >= 19

    def test_trivial_target_returns_initial_sigma(self):
        X, rng = gaussian_rows(1, n=500)
        u = sample_direction(8, rng)
        a = calibrate_sigma(X, u, rng, ess_target=1.0)
        assert a.sigma == float(np.std(X @ u, ddof=1))

    @pytest.mark.parametrize("seed", range(5))
    def test_partition_invariants(self, seed):
        X, rng = gaussian_rows(seed, n=3000)
        a = calibrate_sigma(X, sample_direction(8, rng), rng)
        assert a.train_rows.size + a.test_rows.size == 3000
        assert np.intersect1d(a.train_rows, a.test_rows).size == 0
        assert a.true_weights_train.size == a.is_train.sum()
        np.testing.assert_allclose(a.true_weights_train, true_weights(a.scores[a.is_train]))
        assert min(a.train_rows.size, a.test_rows.size) >= 10
        assert 0.3 <= a.is_train.mean() <= 0.7
        assert a.sigma > 0
        assert np.all((a.scores > 0) & (a.scores < 1))

    def test_reproducible(self):
        X, _ = gaussian_rows(2, n=1000)
        u = sample_direction(8, np.random.default_rng(0))
        a = calibrate_sigma(X, u, np.random.default_rng(11))
        b = calibrate_sigma(X, u, np.random.default_rng(11))
        assert a.sigma == b.sigma
        np.testing.assert_array_equal(a.is_train, b.is_train)

    def test_too_few_rows(self):
        X, rng = gaussian_rows(3, n=199)
        with pytest.raises(ValidationError):
            calibrate_sigma(X, sample_direction(8, rng), rng)

    def test_constant_projection(self):
        X = np.ones((300, 2))
        with pytest.raises(CalibrationError):
            calibrate_sigma(X, [1.0, 1.0], np.random.default_rng(0))

    def test_serializable(self):
        X, rng = gaussian_rows(4, n=400)
        doc = calibrate_sigma(X, sample_direction(8, rng), rng).to_dict()
        assert doc["n_train"] + doc["n_test"] == 400
        assert set(doc) >= {"direction", "sigma", "ess"}

    def test_assignment_rejects_misaligned_weights(self):
        with pytest.raises(ValidationError):
            ShiftAssignment(np.ones(1), 1.0, np.full(3, 0.5), np.array([True, False, True]), np.ones(1))
