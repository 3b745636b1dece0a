"""Experiment runners: the Gaussian toy study and the four-scenario benchmark.

Toy study: training features N(0, I_d), test features N(lambda * 1, I_d) and
``y = 100 x_1 + noise``. Only the first coordinate matters for the label, yet
the true importance weights involve all ``d`` coordinates, so their ESS
``exp(-d lambda^2)`` collapses as ``d`` grows.

Benchmark: per simulation a covariate shift is injected into a labelled
dataset and four weighted-tree scenarios are compared on held-out target
rows:

1. ``unweighted``: all features, unit weights;
2. ``true-weights``: all features, the known injection weights;
3. ``estimated-weights``: all features, weights from a ratio model fitted on
   the training rows against 80% of the target rows;
4. ``selected-estimated``: features picked by forward MI selection on the
   training rows, then ratio model and tree on that subset.

Errors are reported relative to scenario 1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, augment_with_noise, binarize_labels, standardize, subsample
from .errors import CalibrationError, ValidationError
from .ess import empirical_ess
from .logistic import C_GRID
from .mi import MiConfig, forward_select
from .ratio import fit_density_ratio, predict_weights
from .shift import calibrate_sigma, sample_direction
from .tree import MIN_LEAF_GRID, TreeConfig, evaluate, fit_tree, predict, tune_min_leaf

SCENARIOS = ("unweighted", "true-weights", "estimated-weights", "selected-estimated")


# ---------------------------------------------------------------- toy study


def analytic_toy_curves(lambdas, dims) -> list[dict]:
    """Rows ``{lambda, d, d2, ess_star}`` with ``D2 = d lambda^2`` and ``ESS* = exp(-D2)``."""
    rows = []
    for lam in lambdas:
        for d in dims:
            if int(d) < 1:
                raise ValidationError("dimensions must be >= 1")
            d2 = int(d) * float(lam) ** 2
            rows.append({"lambda": float(lam), "d": int(d), "d2": d2, "ess_star": math.exp(-d2)})
    return rows


def _shift_pair(d, lam, n, train_rng, test_rng, noise_rng):
    # features are drawn column by column so the leading columns do not depend on d
    x_train = train_rng.standard_normal((d, n)).T
    x_test = test_rng.standard_normal((d, n)).T + lam
    eps = noise_rng.standard_normal((2, n))
    y_train = 100.0 * x_train[:, 0] + eps[0]
    y_test = 100.0 * x_test[:, 0] + eps[1]
    w = np.exp(lam * x_train.sum(axis=1) - d * lam * lam / 2.0)
    names = tuple(f"x{j + 1}" for j in range(d))
    return Dataset(x_train, y_train, names, "y"), Dataset(x_test, y_test, names, "y"), w


def gaussian_shift_pair(d: int, lam: float, n: int, rng: np.random.Generator):
    """Train/test datasets for the toy law and the closed-form weights on train rows.

    Returns ``(train, test, true_weights)`` with
    ``true_weights = exp(lam * sum_j x_j - d lam^2 / 2)``.
    """
    if d < 1 or n < 1:
        raise ValidationError("d and n must be positive")
    return _shift_pair(int(d), float(lam), int(n), rng, rng, rng)


@dataclass(frozen=True)
class ToyConfig:
    lambdas: tuple = (0.25,)
    dims: tuple = (1, 2, 4, 8, 16)
    n_per_set: int = 20000
    replications: int = 10
    min_samples_leaf: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.lambdas or not self.dims:
            raise ValidationError("lambdas and dims must be non-empty")
        if any(int(d) < 1 for d in self.dims):
            raise ValidationError("dims must be >= 1")
        if self.n_per_set < 2 or self.replications < 1 or self.min_samples_leaf < 1:
            raise ValidationError("n_per_set, replications and min_samples_leaf must be positive")


@dataclass
class ToyReport:
    config: ToyConfig
    rows: list

    def to_dict(self) -> dict:
        return {
            "config": {
                "lambdas": [float(v) for v in self.config.lambdas],
                "dims": [int(v) for v in self.config.dims],
                "n_per_set": self.config.n_per_set,
                "replications": self.config.replications,
                "min_samples_leaf": self.config.min_samples_leaf,
                "seed": self.config.seed,
            },
            "rows": self.rows,
        }

    def table(self) -> list[dict]:
        """One flat row per (lambda, d, replication)."""
        out = []
        for row in self.rows:
            for rep, (rmse, ess) in enumerate(zip(row["rmse"], row["ess"])):
                out.append({"lambda": row["lambda"], "d": row["d"], "replication": rep, "rmse": rmse, "ess": ess})
        return out


def run_toy(config: ToyConfig) -> ToyReport:
    """Weighted-tree RMSE on the shifted test set for every (lambda, d).

    Replication ``r`` uses the same underlying draws for every ``lambda`` and
    ``d`` (common random numbers), so differences across the grid reflect the
    shift rather than sampling noise. Stddevs use ``ddof=0``.
    """
    rows = []
    curves = {(r["lambda"], r["d"]): r for r in analytic_toy_curves(config.lambdas, config.dims)}
    for lam in config.lambdas:
        for d in config.dims:
            rmse, ess = [], []
            for rep in range(config.replications):
                streams = [np.random.default_rng([config.seed, rep, k]) for k in range(3)]
                train, test, w = _shift_pair(int(d), float(lam), config.n_per_set, *streams)
                tree = fit_tree(train.features, train.labels, w, TreeConfig(config.min_samples_leaf))
                rmse.append(math.sqrt(evaluate(predict(tree, test.features), test.labels, "regression")))
                ess.append(empirical_ess(w))
            ref = curves[(float(lam), int(d))]
            rows.append(
                {
                    "lambda": float(lam),
                    "d": int(d),
                    "d2": ref["d2"],
                    "ess_star": ref["ess_star"],
                    "mean_rmse": float(np.mean(rmse)),
                    "std_rmse": float(np.std(rmse)),
                    "mean_ess": float(np.mean(ess)),
                    "rmse": rmse,
                    "ess": ess,
                }
            )
    return ToyReport(config, rows)


# ---------------------------------------------------------------- benchmark


def generate_friedman(n: int, rng: np.random.Generator) -> Dataset:
    """Ten Uniform[0, 1] features; ``y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + N(0, 1)``."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    X = rng.uniform(0.0, 1.0, size=(n, 10))
    y = (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
        + rng.standard_normal(n)
    )
    return Dataset(X, y, tuple(f"x{j + 1}" for j in range(10)), "y")


@dataclass(frozen=True)
class BenchConfig:
    simulations: int = 20
    ess_target: float = 0.01
    noise_target_width: int = 32
    max_rows: int = 8000
    selection: MiConfig = field(default_factory=MiConfig)
    ratio_grid: tuple = C_GRID
    min_leaf_grid: tuple = MIN_LEAF_GRID
    ratio_train_fraction: float = 0.8
    direction_attempts: int = 20
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.simulations < 1:
            raise ValidationError("simulations must be >= 1")
        if not 0 < self.ess_target <= 1:
            raise ValidationError("ess_target must lie in (0, 1]")
        if not 0 < self.ratio_train_fraction < 1:
            raise ValidationError("ratio_train_fraction must lie in (0, 1)")
        if self.noise_target_width < 1 or self.max_rows < 200:
            raise ValidationError("noise_target_width must be >= 1 and max_rows >= 200")
        if self.direction_attempts < 1 or self.threads < 1:
            raise ValidationError("direction_attempts and threads must be >= 1")


@dataclass
class SimulationResult:
    index: int
    status: str
    direction_attempts: int
    sigma: float | None = None
    n_train: int = 0
    n_ratio_target: int = 0
    n_eval: int = 0
    errors: dict = field(default_factory=dict)
    relative_errors: dict = field(default_factory=dict)
    ess: dict = field(default_factory=dict)
    min_samples_leaf: dict = field(default_factory=dict)
    selected: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "status": self.status,
            "direction_attempts": self.direction_attempts,
            "sigma": self.sigma,
            "n_train": self.n_train,
            "n_ratio_target": self.n_ratio_target,
            "n_eval": self.n_eval,
            "errors": self.errors,
            "relative_errors": self.relative_errors,
            "ess": self.ess,
            "min_samples_leaf": self.min_samples_leaf,
            "selected": self.selected,
        }


@dataclass
class BenchReport:
    task: str
    config: BenchConfig
    simulations: list

    @property
    def completed(self) -> list:
        return [s for s in self.simulations if s.status == "ok"]

    @property
    def skipped(self) -> list:
        return [s.index for s in self.simulations if s.status != "ok"]

    def aggregate(self) -> dict:
        done = self.completed
        out = {"completed": len(done), "skipped": self.skipped}
        if not done:
            return out
        rel = {}
        for name in SCENARIOS:
            vals = np.array([s.relative_errors[name] for s in done])
            rel[name] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        ess = {}
        for name in SCENARIOS:
            vals = np.array([s.ess[name] for s in done])
            ess[name] = {"mean": float(np.mean(vals)), "median": float(np.median(vals))}
        counts = np.array([len(s.selected) for s in done])
        out.update(
            relative_errors=rel,
            ess=ess,
            mean_selected_features=float(counts.mean()),
            selected_ess_at_least_estimated=float(
                np.mean([s.ess["selected-estimated"] >= s.ess["estimated-weights"] for s in done])
            ),
        )
        return out

    def to_dict(self) -> dict:
        c = self.config
        return {
            "task": self.task,
            "config": {
                "simulations": c.simulations,
                "ess_target": c.ess_target,
                "noise_target_width": c.noise_target_width,
                "max_rows": c.max_rows,
                "improvement_threshold": c.selection.improvement_threshold,
                "max_features": c.selection.max_features,
                "ratio_train_fraction": c.ratio_train_fraction,
                "direction_attempts": c.direction_attempts,
                "seed": c.seed,
            },
            "aggregate": self.aggregate(),
            "simulations": [s.to_dict() for s in self.simulations],
        }

    def table(self) -> list[dict]:
        """One flat row per (simulation, scenario) for completed simulations."""
        rows = []
        for s in self.completed:
            for name in SCENARIOS:
                rows.append(
                    {
                        "simulation": s.index,
                        "scenario": name,
                        "error": s.errors[name],
                        "relative_error": s.relative_errors[name],
                        "ess": s.ess[name],
                        "min_samples_leaf": s.min_samples_leaf[name],
                        "n_features": len(s.selected) if name == "selected-estimated" else None,
                    }
                )
        return rows


def _prepare(ds: Dataset, config: BenchConfig, task: str, rng) -> Dataset:
    ds = subsample(ds, config.max_rows, rng)
    if ds.d < config.noise_target_width:
        ds = augment_with_noise(ds, config.noise_target_width, rng)
    ds, _ = standardize(ds)
    if task == "classification" and ds.task != "classification":
        ds = binarize_labels(ds)
    return ds


def _inject(X, config: BenchConfig, rng):
    for attempt in range(1, config.direction_attempts + 1):
        try:
            return attempt, calibrate_sigma(X, sample_direction(X.shape[1], rng), rng, config.ess_target)
        except CalibrationError:
            continue
    return config.direction_attempts, None


def _scenario(X_tr, y_tr, w, X_ev, y_ev, task, rng, grid):
    tree = tune_min_leaf(X_tr, y_tr, w, task, rng, grid)
    return evaluate(predict(tree, X_ev), y_ev, task), tree.config.min_samples_leaf


def run_simulation(ds: Dataset, config: BenchConfig, task: str, index: int) -> SimulationResult:
    """One benchmark simulation; every random draw derives from ``(seed, index)``."""
    stream = [np.random.default_rng([config.seed, index, k]) for k in range(8)]
    data = _prepare(ds, config, task, stream[0])
    X, y = data.features, data.labels
    attempts, shift = _inject(X, config, stream[1])
    if shift is None:
        return SimulationResult(index, "calibration-failed", attempts)

    train, test = shift.train_rows, shift.test_rows
    perm = stream[2].permutation(test.size)
    n_ratio = int(round(config.ratio_train_fraction * test.size))
    ratio_rows, eval_rows = test[np.sort(perm[:n_ratio])], test[np.sort(perm[n_ratio:])]
    if eval_rows.size == 0 or ratio_rows.size == 0:
        return SimulationResult(index, "too-few-target-rows", attempts)
    X_tr, y_tr, X_ev, y_ev = X[train], y[train], X[eval_rows], y[eval_rows]

    weights = {"unweighted": np.ones(train.size), "true-weights": shift.true_weights_train}
    ratio = fit_density_ratio(X_tr, X[ratio_rows], stream[3], grid=config.ratio_grid)
    weights["estimated-weights"] = predict_weights(ratio, X_tr)

    sel = forward_select(X_tr, y_tr, task, config.selection, stream[4])
    cols = list(sel.selected)
    ratio_sel = fit_density_ratio(X_tr[:, cols], X[ratio_rows][:, cols], stream[5], grid=config.ratio_grid)
    weights["selected-estimated"] = predict_weights(ratio_sel, X_tr[:, cols])

    errors, leaves = {}, {}
    for k, name in enumerate(SCENARIOS):
        use = cols if name == "selected-estimated" else slice(None)
        tree_rng = np.random.default_rng([config.seed, index, 8, k])
        errors[name], leaves[name] = _scenario(
            X_tr[:, use], y_tr, weights[name], X_ev[:, use], y_ev, task, tree_rng, config.min_leaf_grid
        )
    base = errors["unweighted"]
    rel = {
        name: (1.0 if name == "unweighted" else (errors[name] / base if base > 0 else math.nan))
        for name in SCENARIOS
    }
    return SimulationResult(
        index,
        "ok",
        attempts,
        sigma=float(shift.sigma),
        n_train=int(train.size),
        n_ratio_target=int(ratio_rows.size),
        n_eval=int(eval_rows.size),
        errors=errors,
        relative_errors=rel,
        ess={name: empirical_ess(w) for name, w in weights.items()},
        min_samples_leaf=leaves,
        selected=[int(j) for j in cols],
    )


def run_benchmark(ds: Dataset, config: BenchConfig = BenchConfig(), task: str | None = None) -> BenchReport:
    """Run ``config.simulations`` independent simulations (optionally on threads).

    Results are keyed and ordered by simulation index, so the report does not
    depend on ``config.threads``.
    """
    task = task or ds.task
    if task not in ("regression", "classification"):
        raise ValidationError("benchmark needs a labelled dataset and a task")
    if ds.labels is None:
        raise ValidationError("benchmark needs labels")

    def one(i):
        return run_simulation(ds, config, task, i)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            sims = list(pool.map(one, range(config.simulations)))
    else:
        sims = [one(i) for i in range(config.simulations)]
    return BenchReport(task, config, sims)
