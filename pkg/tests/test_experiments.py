import numpy as np
import pytest

from covshift.data import Dataset
from covshift.errors import ValidationError
from covshift.experiments import (
    SCENARIOS,
    BenchConfig,
    ToyConfig,
    analytic_toy_curves,
    gaussian_shift_pair,
    generate_friedman,
    run_benchmark,
    run_toy,
)
from covshift.mi import MiConfig


def ols_slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


class TestCurves:
    def test_examples(self):
        (row,) = analytic_toy_curves([1.0], [4])
        assert row["d2"] == 4.0
        assert row["ess_star"] == pytest.approx(0.0183156, abs=5e-8)
        (row,) = analytic_toy_curves([0.5], [10])
        assert row["ess_star"] == pytest.approx(0.0820850, abs=5e-8)

    def test_sign_symmetry(self):
        a = analytic_toy_curves([0.3], range(1, 9))
        b = analytic_toy_curves([-0.3], range(1, 9))
        assert [r["ess_star"] for r in a] == [r["ess_star"] for r in b]

    def test_rejects_zero_dimension(self):
        with pytest.raises(ValidationError):
            analytic_toy_curves([0.1], [0])


class TestShiftPair:
    def test_no_shift_unit_weights(self):
        _, _, w = gaussian_shift_pair(3, 0.0, 100, np.random.default_rng(0))
        np.testing.assert_array_equal(w, 1.0)

    def test_test_set_slope(self):
        _, test, _ = gaussian_shift_pair(3, 0.25, 20_000, np.random.default_rng(1))
        assert abs(ols_slope(test.features[:, 0], test.labels) - 100) <= 1

    def test_test_features_shifted(self):
        train, test, _ = gaussian_shift_pair(4, 0.5, 20_000, np.random.default_rng(2))
        np.testing.assert_allclose(test.features.mean(axis=0), 0.5, atol=0.05)
        np.testing.assert_allclose(train.features.mean(axis=0), 0.0, atol=0.05)

    def test_weights_match_density_ratio(self):
        train, _, w = gaussian_shift_pair(2, 0.4, 50, np.random.default_rng(3))
        x = train.features
        ratio = np.exp(-0.5 * ((x - 0.4) ** 2).sum(axis=1) + 0.5 * (x**2).sum(axis=1))
        np.testing.assert_allclose(w, ratio, rtol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            gaussian_shift_pair(0, 0.1, 10, np.random.default_rng(0))


class TestToy:
    def test_no_shift_stays_at_baseline(self):
        report = run_toy(ToyConfig(lambdas=(0.0,), dims=(1, 4), n_per_set=5000, replications=2))
        base, other = (row["mean_rmse"] for row in report.rows)
        assert abs(other - base) <= 0.1 * base
        assert all(row["mean_ess"] == 1.0 for row in report.rows)

    def test_single_replication_has_zero_spread(self):
        report = run_toy(ToyConfig(dims=(2,), n_per_set=500, replications=1))
        assert report.rows[0]["std_rmse"] == 0.0

    def test_table_and_dict(self):
        report = run_toy(ToyConfig(dims=(1, 2), n_per_set=300, replications=2))
        assert len(report.table()) == 4
        doc = report.to_dict()
        assert doc["config"]["dims"] == [1, 2]
        assert set(doc["rows"][0]) >= {"lambda", "d", "mean_rmse", "std_rmse", "ess_star"}

    def test_deterministic(self):
        cfg = ToyConfig(dims=(3,), n_per_set=400, replications=2, seed=5)
        assert run_toy(cfg).rows == run_toy(cfg).rows

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            ToyConfig(dims=(0,))
        with pytest.raises(ValidationError):
            ToyConfig(replications=0)


class TestFriedman:
    def test_generator(self):
        ds = generate_friedman(20_000, np.random.default_rng(0))
        assert ds.features.min() >= 0 and ds.features.max() <= 1
        assert abs(ols_slope(ds.features[:, 3], ds.labels) - 10) <= 0.5
        assert abs(ds.labels.var() - 25) <= 3


def small_bench(threads=1, simulations=2):
    return BenchConfig(
        simulations=simulations,
        max_rows=600,
        noise_target_width=12,
        selection=MiConfig(),
        seed=3,
        threads=threads,
    )


@pytest.fixture(scope="module")
def friedman_small():
    return generate_friedman(600, np.random.default_rng(0))


class TestBenchmark:
    def test_smoke(self, friedman_small):
        report = run_benchmark(friedman_small, small_bench())
        assert report.task == "regression"
        assert len(report.completed) == 2 and not report.skipped
        for sim in report.completed:
            assert sim.relative_errors["unweighted"] == 1.0
            assert 1 <= len(sim.selected) <= 15
            assert sim.ess["unweighted"] == 1.0
            assert sim.ess["true-weights"] < 0.01
            assert sim.n_ratio_target + sim.n_eval + sim.n_train == 600
            assert set(sim.errors) == set(SCENARIOS)
        agg = report.aggregate()
        assert agg["relative_errors"]["unweighted"] == {"mean": 1.0, "std": 0.0}
        assert len(report.table()) == 4 * len(report.completed)

    def test_independent_of_thread_count(self, friedman_small):
        one = run_benchmark(friedman_small, small_bench(threads=1))
        two = run_benchmark(friedman_small, small_bench(threads=2))
        strip = lambda doc: {k: v for k, v in doc.items() if k != "config"}
        assert strip(one.to_dict()) == strip(two.to_dict())

    def test_classification(self):
        rng = np.random.default_rng(1)
        ds = generate_friedman(500, rng)
        report = run_benchmark(ds, small_bench(simulations=1), task="classification")
        assert report.completed
        for sim in report.completed:
            assert all(0 <= e <= 1 for e in sim.errors.values())

    def test_requires_labels(self, friedman_small):
        bare = Dataset(friedman_small.features)
        with pytest.raises(ValidationError):
            run_benchmark(bare, small_bench())

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            BenchConfig(simulations=0)
        with pytest.raises(ValidationError):
            BenchConfig(ratio_train_fraction=1.0)
