"""Mutual information from Gaussian mixtures and greedy feature search.

Regression: one mixture on ``[x | y]``; the marginals of x and y come from
the same fit in closed form. Classification: one mixture per class, mixed
with the empirical class frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gmm import GmmConfig, K_RANGE, log_density, marginalize, select_components

MIN_ROWS = 30
LEVEL_FLOOR = 1e-12
# the greedy searches evaluate hundreds of subsets, so the component sweep
# stops after 3 non-improving k
SEARCH_GMM = GmmConfig(k_patience=3)


@dataclass(frozen=True)
class MiConfig:
    improvement_threshold: float = 0.01
    max_features: int = 15
    gmm: GmmConfig = SEARCH_GMM
    k_range: tuple = K_RANGE

    def __post_init__(self):
        if not self.improvement_threshold > 0:
            raise ValidationError("improvement_threshold must be positive")
        if self.max_features < 1:
            raise ValidationError("max_features must be >= 1")


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a greedy search.

    Forward: ``mi_trajectory[j]`` is the estimate after the (j+1)-th inclusion.
    Backward: ``mi_trajectory`` holds the estimate of the working set before
    each removal, ending with the final set; ``eliminated`` lists removals
    in order.
    """

    selected: list
    mi_trajectory: list
    stop_reason: str
    eliminated: list = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {
            "selected": [int(j) for j in self.selected],
            "mi_trajectory": [float(v) for v in self.mi_trajectory],
            "stop_reason": self.stop_reason,
        }
        if self.eliminated:
            doc["eliminated"] = [int(j) for j in self.eliminated]
        return doc


def _matrix(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def estimate_mi_regression(X_sub, y, rng: np.random.Generator, config: MiConfig = MiConfig()) -> float:
    """Plug-in I(y; x) in nats from a mixture fitted on ``[x | y]``."""
    X = _matrix(X_sub)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise ValidationError("labels and features disagree in length")
    if X.shape[0] < MIN_ROWS:
        raise ValidationError(f"need at least {MIN_ROWS} rows, got {X.shape[0]}")
    q = X.shape[1]
    Z = np.hstack([X, y[:, None]])
    g = select_components(Z, rng, config.gmm, config.k_range)
    joint = log_density(g, Z)
    lx = log_density(marginalize(g, range(q)), X)
    ly = log_density(marginalize(g, [q]), y[:, None])
    return float(np.mean(joint - lx - ly))


def estimate_mi_classification(X_sub, y, rng: np.random.Generator, config: MiConfig = MiConfig()) -> float:
    """Plug-in I(y; x) in nats from per-class mixtures and empirical priors."""
    X = _matrix(X_sub)
    y = np.asarray(y).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise ValidationError("labels and features disagree in length")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ValidationError("classification MI needs at least two classes")
    if counts.min() < MIN_ROWS:
        raise ValidationError(f"every class needs at least {MIN_ROWS} rows")
    log_prior = np.log(counts / counts.sum())
    cond = np.empty((X.shape[0], classes.size))
    for c, label in enumerate(classes):
        g = select_components(X[y == label], rng, config.gmm, config.k_range)
        cond[:, c] = log_density(g, X)
    own = cond[np.arange(X.shape[0]), np.searchsorted(classes, y)]
    mix = log_prior + cond
    m = mix.max(axis=1)
    marginal = m + np.log(np.exp(mix - m[:, None]).sum(axis=1))
    return float(np.mean(own - marginal))


def subset_rng(master: int, subset) -> np.random.Generator:
    """Stream keyed by the sorted feature subset, independent of search order."""
    return np.random.default_rng([int(master), *sorted(int(j) for j in subset)])


def _estimator(task):
    if task == "regression":
        return estimate_mi_regression
    if task == "classification":
        return estimate_mi_classification
    raise ValidationError(f"unknown task {task!r}")


def _improvement(new, old):
    return (new - old) / max(old, LEVEL_FLOOR)


def forward_select(X, y, task: str, config: MiConfig = MiConfig(), rng: np.random.Generator | None = None) -> SelectionResult:
    """Greedy forward search on estimated mutual information.

    Each step adds the feature whose inclusion gives the largest estimate.
    The search ends after the added feature improves the estimate by less
    than ``improvement_threshold`` relative to the previous level (or not at
    all), when ``max_features`` are selected, or when no features remain.
    The feature added in the final step is kept.
    """
    X = _matrix(X)
    d = X.shape[1]
    if rng is None:
        raise ValidationError("a seeded random generator is required")
    estimate = _estimator(task)
    master = int(rng.integers(2**63 - 1))

    selected, trajectory = [], []
    remaining = list(range(d))
    while True:
        scores = []
        for j in remaining:
            subset = selected + [j]
            scores.append(estimate(X[:, subset], y, subset_rng(master, subset), config))
        best = int(np.argmax(scores))
        level = scores[best]
        selected.append(remaining.pop(best))
        trajectory.append(level)
        if len(trajectory) > 1:
            gain = _improvement(level, trajectory[-2])
            if gain <= 0 or gain < config.improvement_threshold:
                reason = "relative-improvement"
                break
        if len(selected) >= config.max_features:
            reason = "max-features"
            break
        if not remaining:
            reason = "exhausted"
            break
    return SelectionResult(selected, trajectory, reason)


def backward_eliminate(X, y, task: str, config: MiConfig = MiConfig(), rng: np.random.Generator | None = None) -> SelectionResult:
    """Greedy backward elimination on estimated mutual information.

    Repeatedly drops the feature whose removal costs the least information,
    and stops when even that removal would lower the estimate by at least
    ``improvement_threshold`` times the current level, or one feature is left.
    """
    X = _matrix(X)
    d = X.shape[1]
    if d < 2:
        raise ValidationError("backward elimination needs at least two features")
    if rng is None:
        raise ValidationError("a seeded random generator is required")
    estimate = _estimator(task)
    master = int(rng.integers(2**63 - 1))

    current = list(range(d))
    level = estimate(X[:, current], y, subset_rng(master, current), config)
    trajectory, eliminated = [level], []
    reason = "exhausted"
    while len(current) > 1:
        scores = []
        for j in current:
            subset = [i for i in current if i != j]
            scores.append(estimate(X[:, subset], y, subset_rng(master, subset), config))
        best = int(np.argmax(scores))
        drop = level - scores[best]
        if drop >= config.improvement_threshold * max(level, LEVEL_FLOOR):
            reason = "relative-improvement"
            break
        eliminated.append(current.pop(best))
        level = scores[best]
        trajectory.append(level)
    return SelectionResult(sorted(current), trajectory, reason, eliminated)
