"""Full-covariance Gaussian mixtures: EM fitting, densities, marginals and
holdout selection of the number of components."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError

LOG_2PI = math.log(2.0 * math.pi)
EPS = float(np.finfo(float).eps)
K_RANGE = tuple(range(1, 16))


@dataclass(frozen=True)
class GmmConfig:
    restarts: int = 3
    max_iter: int = 200
    tol: float = 1e-5
    ridge: float = 1e-6
    lloyd_iter: int = 5
    # stop the component sweep after this many consecutive k without a better
    # holdout score; None sweeps the whole range
    k_patience: int | None = None

    def __post_init__(self):
        if self.restarts < 1 or self.max_iter < 1:
            raise ValidationError("restarts and max_iter must be >= 1")
        if not self.tol > 0 or self.ridge < 0:
            raise ValidationError("tol must be positive and ridge non-negative")
        if self.k_patience is not None and self.k_patience < 1:
            raise ValidationError("k_patience must be >= 1")


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of ``k`` Gaussians in ``q`` dimensions.

    ``log_likelihood_trace`` holds the mean training log-likelihood after
    every EM iteration of the run that produced the mixture (empty for
    mixtures built by hand or by marginalization).
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood_trace: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        k = w.size
        mu = np.asarray(self.means, dtype=float).reshape(k, -1)
        q = mu.shape[1]
        cov = np.asarray(self.covariances, dtype=float).reshape(k, q, q)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValidationError("mixture weights must be non-negative and sum to 1")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValidationError("mixture covariance is not positive definite") from None
        prec_chol = np.linalg.inv(chol).transpose(0, 2, 1)
        log_det_prec = np.log(np.diagonal(prec_chol, axis1=1, axis2=2)).sum(axis=1)
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
        for name, val in (("weights", w), ("means", mu), ("covariances", cov)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_prec_chol", prec_chol)
        object.__setattr__(self, "_log_norm", log_w + log_det_prec - 0.5 * q * LOG_2PI)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.reshape(-1).tolist() for c in self.covariances],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianMixture":
        k = len(doc["weights"])
        q = len(doc["means"][0])
        cov = np.asarray(doc["covariances"], dtype=float).reshape(k, q, q)
        return cls(np.asarray(doc["weights"]), np.asarray(doc["means"]), cov)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _component_log_prob(means, prec_chol, log_norm, X):
    # (n, k) matrix of log(w_j) + log N(x_i; mu_j, S_j)
    diff = X[None, :, :] - means[:, None, :]
    z = np.matmul(diff, prec_chol)
    return log_norm[None, :] - 0.5 * np.einsum("knq,knq->nk", z, z)


def _as_matrix(X, q=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if q in (None, 1) else X[None, :]
    if q is not None and X.shape[1] != q:
        raise ValidationError(f"expected {q} coordinates, got {X.shape[1]}")
    return X


def log_density(g: GaussianMixture, x):
    """Log mixture density at a point (scalar) or at every row of a matrix."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and (g.dim > 1 or arr.size == 1))
    X = arr.reshape(1, -1) if single else _as_matrix(arr, g.dim)
    if X.shape[1] != g.dim:
        raise ValidationError(f"expected {g.dim} coordinates, got {X.shape[1]}")
    out = logsumexp(_component_log_prob(g.means, g._prec_chol, g._log_norm, X), axis=1)
    return float(out[0]) if single else out


def marginalize(g: GaussianMixture, coords) -> GaussianMixture:
    """Mixture of the selected coordinates (weights unchanged)."""
    coords = [int(c) for c in np.atleast_1d(coords)]
    if not coords or len(set(coords)) != len(coords) or min(coords) < 0 or max(coords) >= g.dim:
        raise ValidationError(f"invalid coordinate subset {coords} for dimension {g.dim}")
    idx = np.asarray(coords)
    return GaussianMixture(g.weights, g.means[:, idx], g.covariances[:, idx][:, :, idx])


def _sq_dist(X, sq_norms, centers):
    return np.maximum(sq_norms[:, None] - 2.0 * (X @ centers.T) + np.sum(centers**2, axis=1), 0.0)


def _kmeanspp_labels(X, k, rng, lloyd_iter):
    """k-means++ seeding followed by a few Lloyd iterations; returns labels."""
    n = X.shape[0]
    sq_norms = np.sum(X * X, axis=1)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = _sq_dist(X, sq_norms, centers[:1])[:, 0]
    for j in range(1, k):
        cum = np.cumsum(d2)
        if cum[-1] > 0:
            i = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), n - 1)
        else:
            i = int(rng.integers(n))
        centers[j] = X[i]
        d2 = np.minimum(d2, _sq_dist(X, sq_norms, centers[j : j + 1])[:, 0])
    labels = None
    for _ in range(max(lloyd_iter, 1)):
        dist = _sq_dist(X, sq_norms, centers)
        new = np.argmin(dist, axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # revive empty clusters with the worst-served point
            far = int(np.argmax(dist[np.arange(n), new]))
            new[far] = j
            dist[far] = 0.0
            counts = np.bincount(new, minlength=k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        centers = sums / counts[:, None]
    return labels


class _Moments:
    """Data-side quantities reused by every EM iteration.

    Quadratic forms and second moments are evaluated through the pairwise
    products ``x_i x_j`` (i <= j) so each iteration is a handful of matrix
    products instead of per-component loops.
    """

    def __init__(self, X):
        n, q = X.shape
        self.center = X.mean(axis=0)
        self.X = X - self.center
        self.iu = np.triu_indices(q)
        self.X2 = self.X[:, self.iu[0]] * self.X[:, self.iu[1]]
        self.pair_scale = np.where(self.iu[0] == self.iu[1], 1.0, 2.0)
        self.design_t = np.ascontiguousarray(np.hstack([self.X2, self.X, np.ones((n, 1))]).T)
        self.n, self.q = n, q

    def log_prob(self, means, prec, log_norm):
        # (k, n) matrix of log(w_j) + log N(x_i; mu_j, S_j) as one product with [X2 | X | 1]
        pm = np.einsum("kij,kj->ki", prec, means)
        coef = np.hstack([
            -0.5 * prec[:, self.iu[0], self.iu[1]] * self.pair_scale,
            pm,
            (log_norm - 0.5 * np.einsum("ki,ki->k", pm, means))[:, None],
        ])
        return coef @ self.design_t

    def m_step(self, resp, ridge):
        # resp is (k, n)
        n, q = self.n, self.q
        nk = resp.sum(axis=1) + 10 * EPS
        means = (resp @ self.X) / nk[:, None]
        second = (resp @ self.X2) / nk[:, None]
        cov = np.empty((nk.size, q, q))
        cov[:, self.iu[0], self.iu[1]] = second
        cov[:, self.iu[1], self.iu[0]] = second
        cov -= means[:, :, None] * means[:, None, :]
        cov += ridge * np.eye(q)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValidationError("covariance update lost positive definiteness") from None
        inv_chol = np.linalg.inv(chol)
        prec = np.matmul(inv_chol.transpose(0, 2, 1), inv_chol)
        log_norm = (
            np.log(nk / n)
            - np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
            - 0.5 * q * LOG_2PI
        )
        return nk / n, means, cov, prec, log_norm


def _posterior(lp):
    # column-wise log-sum-exp of a (k, n) matrix and responsibilities from one exp pass
    m = lp.max(axis=0)
    e = np.exp(lp - m)
    s = e.sum(axis=0)
    return m + np.log(s), e / s


def _em(X, resp, config):
    """EM from initial responsibilities ``resp`` of shape (k, n).

    Returns weights, means, covariances and the mean log-likelihood after
    every E-step.
    """
    mom = X if isinstance(X, _Moments) else _Moments(X)
    weights, means, cov, prec, log_norm = mom.m_step(resp, config.ridge)
    trace = []
    prev = -np.inf
    for _ in range(config.max_iter):
        lse, resp = _posterior(mom.log_prob(means, prec, log_norm))
        ll = float(lse.mean())
        trace.append(ll)
        if ll - prev < config.tol * max(abs(ll), 1.0):
            break
        prev = ll
        weights, means, cov, prec, log_norm = mom.m_step(resp, config.ridge)
    else:
        trace.append(float(_posterior(mom.log_prob(means, prec, log_norm))[0].mean()))
    return weights, means + mom.center, cov, trace


def fit_gmm(X, k: int, rng: np.random.Generator, config: GmmConfig = GmmConfig()) -> GaussianMixture:
    """Maximum-likelihood mixture by EM, best of ``config.restarts`` k-means++ starts.

    EM stops when the mean log-likelihood improves by less than
    ``tol * max(|ll|, 1)`` or after ``max_iter`` iterations. A diagonal ridge
    is added to every covariance update.
    """
    X = _as_matrix(X)
    n, q = X.shape
    if k < 1 or n < k:
        raise ValidationError(f"cannot fit {k} components to {n} rows")
    if not np.all(np.isfinite(X)):
        raise ValidationError("data contain non-finite values")

    if k == 1:
        weights, means, cov, trace = _em(X, np.ones((1, n)), config)
        return GaussianMixture(weights, means, cov, tuple(trace))

    mom = _Moments(X)
    best = None
    for _ in range(config.restarts):
        labels = _kmeanspp_labels(X, k, rng, config.lloyd_iter)
        resp = np.zeros((k, n))
        resp[labels, np.arange(n)] = 1.0
        weights, means, cov, trace = _em(mom, resp, config)
        if best is None or trace[-1] > best[3][-1]:
            best = (weights, means, cov, trace)
    weights, means, cov, trace = best
    return GaussianMixture(weights / weights.sum(), means, cov, tuple(trace))


def select_components(
    X, rng: np.random.Generator, config: GmmConfig = GmmConfig(), k_range=K_RANGE
) -> GaussianMixture:
    """Pick the component count by holdout log-likelihood and refit on all rows.

    Rows are split evenly at random; each ``k`` is fitted on one half and
    scored by mean log-likelihood on the other (ties go to the smaller ``k``).
    With ``config.k_patience`` set, the sweep ends early once that many
    consecutive ``k`` fail to beat the best score so far.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 30:
        raise ValidationError("component selection needs at least 30 rows")
    perm = rng.permutation(n)
    train, hold = X[perm[: n // 2]], X[perm[n // 2 :]]
    best_k, best_score, stale = None, -np.inf, 0
    for k in k_range:
        if k > train.shape[0]:
            break
        g = fit_gmm(train, k, rng, config)
        score = float(np.mean(log_density(g, hold)))
        if score > best_score:
            best_k, best_score, stale = k, score, 0
        else:
            stale += 1
            if config.k_patience is not None and stale >= config.k_patience:
                break
    return fit_gmm(X, best_k, rng, config)
