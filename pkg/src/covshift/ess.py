"""Effective sample size, order-2 Renyi divergence and the ESS generalization bound.

Logarithms are natural throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError


def check_weights(w) -> np.ndarray:
    """Validate an importance-weight vector and return it as a float array."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite")
    if np.any(w < 0):
        raise ValidationError("weights must be non-negative")
    if not np.any(w > 0):
        raise ValidationError("at least one weight must be positive")
    return w


def empirical_ess(w) -> float:
    """Fraction of effective samples, ``(sum w)^2 / (n sum w^2)``.

    Weights are rescaled by their maximum first, so uniform weights give
    exactly 1 and the value does not depend on the overall scale.
    """
    w = check_weights(w)
    u = w / w.max()
    value = u.sum() ** 2 / (u.size * np.dot(u, u))
    return float(min(value, 1.0))


def normalize_weights(w) -> np.ndarray:
    w = check_weights(w)
    return w / w.sum()


def self_normalized_estimate(values, w) -> float:
    """Weighted mean of ``values`` with weights normalized to sum to one."""
    values = np.asarray(values, dtype=float)
    w = check_weights(w)
    if values.shape != w.shape:
        raise ValidationError(f"values length {values.shape} does not match weights {w.shape}")
    return float(np.dot(normalize_weights(w), values))


@dataclass(frozen=True, eq=False)
class GaussianPairSpec:
    """Target N(mu_p, S) against source N(mu_q, S) with a shared covariance."""

    mu_p: np.ndarray
    mu_q: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu_p = np.atleast_1d(np.asarray(self.mu_p, dtype=float))
        mu_q = np.atleast_1d(np.asarray(self.mu_q, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        d = mu_p.size
        if mu_q.shape != (d,) or cov.shape != (d, d):
            raise ValidationError("mean and covariance shapes disagree")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValidationError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValidationError("covariance is not positive definite") from None
        object.__setattr__(self, "mu_p", mu_p)
        object.__setattr__(self, "mu_q", mu_q)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def isotropic_shift(cls, d: int, lam: float) -> "GaussianPairSpec":
        """N(lam * 1, I_d) against N(0, I_d)."""
        return cls(np.full(d, float(lam)), np.zeros(d), np.eye(d))


def gaussian_d2(spec: GaussianPairSpec) -> float:
    """Closed-form D2 for equal-covariance Gaussians: the squared Mahalanobis distance."""
    z = np.linalg.solve(spec._chol, spec.mu_p - spec.mu_q)
    return float(np.dot(z, z))


def population_ess(d2: float) -> float:
    """Limit of the empirical ESS under true-ratio weights, ``exp(-D2)``."""
    if not math.isfinite(d2) or d2 < 0:
        raise ValidationError(f"divergence must be finite and non-negative, got {d2}")
    return math.exp(-d2)


def mc_d2(
    log_p: Callable[[np.ndarray], np.ndarray],
    log_q: Callable[[np.ndarray], np.ndarray],
    samples_from_target,
) -> float:
    """Monte Carlo D2 from draws of the target: ``log mean exp(log p - log q)``."""
    x = np.asarray(samples_from_target, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    lp = np.asarray(log_p(x), dtype=float).reshape(-1)
    lq = np.asarray(log_q(x), dtype=float).reshape(-1)
    if lp.shape != (x.shape[0],) or lq.shape != (x.shape[0],):
        raise ValidationError("density evaluators must return one value per sample")
    bad = np.flatnonzero(~np.isfinite(lq))
    if bad.size:
        raise ValidationError(f"source density vanishes or is undefined at sample {bad[0]}")
    bad = np.flatnonzero(~np.isfinite(lp))
    if bad.size:
        raise ValidationError(f"target density is not finite at sample {bad[0]}")
    r = lp - lq
    shift = r.max()
    return float(shift + math.log(np.mean(np.exp(r - shift))))


@dataclass(frozen=True)
class BoundParams:
    ess_star: float
    pdim: int
    n: int
    delta: float

    def __post_init__(self):
        if not 0 < self.ess_star <= 1:
            raise ValidationError("ess_star must lie in (0, 1]")
        if self.pdim < 1 or self.n < 1:
            raise ValidationError("pdim and n must be positive")
        if self.pdim > self.n:
            raise ValidationError("pdim must not exceed n")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")


def generalization_bound(b: BoundParams) -> float:
    """Uniform deviation bound between target risk and true-weight empirical risk.

    ``2^(5/4) / sqrt(ESS*) * [(p log(2 e n / p) + log(4 / delta)) / n]^(3/8)``
    """
    p, n = b.pdim, b.n
    complexity = (p * math.log(2.0 * math.e * n / p) + math.log(4.0 / b.delta)) / n
    return 2.0 ** 1.25 / math.sqrt(b.ess_star) * complexity ** 0.375


def gaussian_log_density(mean, cov=None):
    """Vectorized log-density of N(mean, cov); identity covariance by default."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    cov = np.eye(d) if cov is None else np.atleast_2d(np.asarray(cov, dtype=float))
    chol = np.linalg.cholesky(cov)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    const = -0.5 * (d * math.log(2.0 * math.pi) + log_det)

    def log_pdf(x):
        x = np.asarray(x, dtype=float).reshape(-1, d)
        z = np.linalg.solve(chol, (x - mean).T)
        return const - 0.5 * np.sum(z * z, axis=0)

    return log_pdf
