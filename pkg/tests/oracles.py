"""Independent reference implementations used as test oracles.

Written with plain Python loops and direct impurity sums so they share no
code paths with the vectorized library routines.
"""

import math

import numpy as np

GAIN_RTOL = 1e-9


def _weighted_sse(y, w):
    W = sum(w)
    if W <= 0:
        return 0.0
    mu = sum(wi * yi for wi, yi in zip(w, y)) / W
    return sum(wi * (yi - mu) ** 2 for wi, yi in zip(w, y))


def _weighted_gini_mass(y, w, n_classes):
    W = sum(w)
    if W <= 0:
        return 0.0
    mass = [0.0] * n_classes
    for yi, wi in zip(y, w):
        mass[yi] += wi
    return W * (1.0 - sum((m / W) ** 2 for m in mass))


def _impurity(y, w, task, n_classes):
    return _weighted_sse(y, w) if task == "regression" else _weighted_gini_mass(y, w, n_classes)


def brute_force_split(X, y, w, min_leaf, task, n_classes):
    """Enumerate every (feature, midpoint) pair and return the best split or None."""
    m, d = X.shape
    parent = _impurity(y, w, task, n_classes)
    tol = GAIN_RTOL * (parent if task == "regression" else sum(w))
    if parent <= tol:
        return None
    candidates = []
    for j in range(d):
        values = sorted(set(X[:, j].tolist()))
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2.0
            if not lo <= thr < hi:
                thr = lo
            left = [i for i in range(m) if X[i, j] <= thr]
            right = [i for i in range(m) if X[i, j] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            gain = (
                parent
                - _impurity([y[i] for i in left], [w[i] for i in left], task, n_classes)
                - _impurity([y[i] for i in right], [w[i] for i in right], task, n_classes)
            )
            candidates.append((gain, j, thr))
    if not candidates:
        return None
    best = max(c[0] for c in candidates)
    if best <= tol:
        return None
    ties = [c for c in candidates if c[0] >= best - tol]
    gain, j, thr = min(ties, key=lambda c: (c[1], c[2]))
    return j, thr


def brute_force_tree(X, y, w, min_leaf, task="regression", n_classes=0):
    """Greedy tree as nested tuples ``(feature, threshold, left, right)`` / ``("leaf", count)``."""
    X = np.asarray(X, dtype=float)
    y = list(np.asarray(y).tolist())
    w = list(np.asarray(w, dtype=float).tolist())
    if task == "classification" and not n_classes:
        n_classes = max(y) + 1

    def grow(rows):
        split = brute_force_split(
            X[rows], [y[i] for i in rows], [w[i] for i in rows], min_leaf, task, n_classes
        )
        if split is None:
            return ("leaf", len(rows))
        j, thr = split
        left = [i for i in rows if X[i, j] <= thr]
        right = [i for i in rows if X[i, j] > thr]
        return (j, thr, grow(left), grow(right))

    return grow(list(range(X.shape[0])))


def gaussian_mi(rho):
    """Mutual information of a bivariate normal with correlation ``rho`` (nats)."""
    return -0.5 * math.log(1.0 - rho * rho)


def tree_instance(seed, task="regression"):
    """Small weighted instance with repeated feature values so tie-breaking matters.

    Returns ``(X, y, w, min_leaf)`` with n in [8, 30] and d in [1, 3].
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 31))
    d = int(rng.integers(1, 4))
    X = rng.integers(0, 6, size=(n, d)).astype(float)
    w = rng.choice([0.5, 1.0, 2.0, 3.0], size=n)
    if task == "regression":
        y = rng.integers(0, 4, size=n).astype(float)
    else:
        y = rng.integers(0, 3, size=n)
    return X, y, w, int(rng.integers(1, 4))


def l1_logistic_kkt_violation(X, y, intercept, coefficients, reg_c):
    """Largest violation of the subgradient optimality conditions of

    ``mean(log(1 + exp(z)) - y z) + ||c||_1 / (n C)`` with ``z = b + X c``,
    computed directly from the data without library helpers.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    penalty = 1.0 / (n * reg_c)
    z = intercept + X @ coefficients
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    resid = (p - y) / n
    g0, g = float(resid.sum()), X.T @ resid
    zero = coefficients == 0
    viol = [abs(g0)]
    if zero.any():
        viol.append(float(np.max(np.maximum(np.abs(g[zero]) - penalty, 0.0))))
    if (~zero).any():
        viol.append(float(np.max(np.abs(g[~zero] + np.sign(coefficients[~zero]) * penalty))))
    return max(viol)


def logistic_instance(seed, n=200, m=6):
    """Random sparse logistic data and a log-uniform C in [0.01, 10]."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    beta = rng.normal(size=m) * (rng.random(m) < 0.5)
    z = X @ beta + 0.3
    y = (rng.random(n) < 0.5 * (1.0 + np.tanh(0.5 * z))).astype(int)
    return X, y, float(10 ** rng.uniform(-2, 1))
