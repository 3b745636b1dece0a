"""L1-penalized binary logistic regression.

The training objective is

    (1/n) * sum_i logloss_i + 1 / (n * C) * ||coef||_1

with an unpenalized intercept, so larger ``C`` means weaker regularization.
It is minimized by accelerated proximal gradient (soft-thresholding) with
backtracking; a momentum step that would raise the objective is discarded
and the momentum restarted, which keeps accepted objective values monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import ValidationError

C_RANGE = (1e-4, 5.0)
C_GRID = tuple(float(c) for c in np.logspace(math.log10(C_RANGE[0]), math.log10(C_RANGE[1]), 10))
PROBA_CLIP = 1e-15


@dataclass(frozen=True, eq=False)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    reg_c: float
    holdout_log_loss: float | None = None
    objective_trace: tuple = ()
    n_iter: int = 0

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if not (np.all(np.isfinite(coef)) and math.isfinite(self.intercept)):
            raise ValidationError("logistic parameters must be finite")
        object.__setattr__(self, "coefficients", coef)


@dataclass(frozen=True)
class ExpansionSpec:
    degree: int = 2
    include_interactions: bool = True
    include_bias_column: bool = False

    def __post_init__(self):
        if self.degree != 2:
            raise ValidationError("only quadratic expansion is supported")

    def width(self, d: int) -> int:
        quad = d * (d + 1) // 2 if self.include_interactions else d
        return d + quad + (1 if self.include_bias_column else 0)


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 2000
    tol: float = 1e-8
    # gradient-mapping sup-norm required on top of the objective criterion
    opt_tol: float = 1e-6


def expand_quadratic(features, spec: ExpansionSpec = ExpansionSpec()) -> np.ndarray:
    """Columns ``[x_1..x_d, x_1^2, x_1 x_2, ..., x_d^2]`` (pairs i <= j in order)."""
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if d < 1:
        raise ValidationError("need at least one feature to expand")
    if spec.include_interactions:
        i, j = np.triu_indices(d)
        quad = X[:, i] * X[:, j]
    else:
        quad = X * X
    parts = [X, quad]
    if spec.include_bias_column:
        parts.insert(0, np.ones((n, 1)))
    return np.hstack(parts)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValidationError(f"labels length {y.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise ValidationError("design matrix has non-finite entries")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be binary 0/1")
    if y.min() == y.max():
        raise ValidationError("both classes must be present")
    return X, y.astype(float)


def smooth_loss_and_grad(X, y, intercept, coef):
    """Mean log loss and its gradient w.r.t. ``(intercept, coef)``."""
    z = intercept + X @ coef
    loss = float(np.mean(-y * log_expit(z) - (1 - y) * log_expit(-z)))
    r = (expit(z) - y) / X.shape[0]
    return loss, float(r.sum()), X.T @ r


def _smooth_loss(X, y, intercept, coef):
    z = intercept + X @ coef
    return float(np.mean(-y * log_expit(z) - (1 - y) * log_expit(-z)))


def _lipschitz_estimate(X):
    # power iteration on [1 X]^T [1 X] / (4n)
    n, m = X.shape
    v = np.ones(m + 1) / math.sqrt(m + 1)
    lam = 1.0
    for _ in range(15):
        u = v[0] + X @ v[1:]
        w = np.concatenate([[u.sum()], X.T @ u]) / n
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1e-3
        v = w / lam
    return max(lam / 4.0, 1e-3)


def fit_l1_logistic(X, y, reg_c: float, config: SolverConfig = SolverConfig(), init=None) -> LogisticModel:
    """Minimize mean log loss plus ``||coef||_1 / (n * reg_c)``.

    ``init`` may be a fitted :class:`LogisticModel` used as a warm start.
    The returned model carries the accepted objective values in
    ``objective_trace``.
    """
    X, y = _check_xy(X, y)
    if not reg_c > 0:
        raise ValidationError("reg_c must be positive")
    n, m = X.shape
    penalty = 1.0 / (n * reg_c)

    if init is not None and init.coefficients.shape == (m,):
        b, coef = float(init.intercept), init.coefficients.copy()
    else:
        p1 = np.clip(y.mean(), 1e-12, 1 - 1e-12)
        b, coef = math.log(p1 / (1 - p1)), np.zeros(m)

    def objective(b_, c_):
        return _smooth_loss(X, y, b_, c_) + penalty * np.abs(c_).sum()

    L = _lipschitz_estimate(X)
    F = objective(b, coef)
    trace = [F]
    yb, yc = b, coef
    t = 1.0
    momentum = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        f_y, gb, gc = smooth_loss_and_grad(X, y, yb, yc)
        while True:
            nb = yb - gb / L
            step = yc - gc / L
            nc = np.sign(step) * np.maximum(np.abs(step) - penalty / L, 0.0)
            db, dc = nb - yb, nc - yc
            f_new = _smooth_loss(X, y, nb, nc)
            quad = f_y + gb * db + gc @ dc + 0.5 * L * (db * db + dc @ dc)
            if f_new <= quad + 1e-15 * max(1.0, abs(f_y)):
                break
            L *= 2.0
        F_new = f_new + penalty * np.abs(nc).sum()
        grad_map = L * max(abs(db), float(np.abs(dc).max()) if m else 0.0)

        if F_new > F:
            if momentum:
                # overshoot from extrapolation: restart from the last accepted point
                yb, yc, t, momentum = b, coef, 1.0, False
                continue
            # plain proximal step from an accepted point; only rounding can land here
            break

        rel = (F - F_new) / max(abs(F), 1e-300)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        yb = nb + beta * (nb - b)
        yc = nc + beta * (nc - coef)
        momentum = beta > 0
        b, coef, F, t = nb, nc, F_new, t_next
        trace.append(F)
        if rel < config.tol and grad_map < config.opt_tol:
            break

    return LogisticModel(coef, float(b), float(reg_c), objective_trace=tuple(trace), n_iter=n_iter)


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.coefficients.shape[0]:
        raise ValidationError(
            f"model expects {model.coefficients.shape[0]} columns, got {X.shape[1]}"
        )
    return expit(model.intercept + X @ model.coefficients)


def log_loss(y, proba) -> float:
    p = np.clip(np.asarray(proba, dtype=float), PROBA_CLIP, 1 - PROBA_CLIP)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _even_split(y, rng, attempts=100):
    n = y.shape[0]
    for _ in range(attempts):
        perm = rng.permutation(n)
        a, b = perm[: n // 2], perm[n // 2 :]
        if np.ptp(y[a]) > 0 and np.ptp(y[b]) > 0:
            return a, b
    raise ValidationError("could not split rows so that both halves contain both classes")


def tune_l1_logistic(X, y, rng: np.random.Generator, grid=C_GRID, config: SolverConfig = SolverConfig()) -> LogisticModel:
    """Holdout choice of ``C`` over ``grid`` by log loss, then refit on all rows.

    The split is an even random one; ties go to the smaller ``C``.
    """
    X, y = _check_xy(X, y)
    if X.shape[0] < 10:
        raise ValidationError("tuning needs at least 10 rows")
    train, hold = _even_split(y, rng)
    best = None
    warm = None
    for c in sorted(grid):
        warm = fit_l1_logistic(X[train], y[train], c, config, init=warm)
        loss = log_loss(y[hold], predict_proba(warm, X[hold]))
        if best is None or loss < best[0]:
            best = (loss, c, warm)
    loss, c, model = best
    final = fit_l1_logistic(X, y, c, config, init=model)
    return LogisticModel(
        final.coefficients,
        final.intercept,
        final.reg_c,
        holdout_log_loss=loss,
        objective_trace=final.objective_trace,
        n_iter=final.n_iter,
    )
