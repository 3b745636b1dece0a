"""Weighted CART trees for regression (variance) and classification (Gini).

Split rules, fixed for reproducibility:

* candidate thresholds are midpoints between consecutive distinct values;
* rows with ``x <= threshold`` go left;
* the split with the largest weighted impurity decrease wins, and gains
  within a relative tolerance of the best count as ties, resolved toward the
  lowest feature index and then the lowest threshold;
* ``min_samples_leaf`` counts rows, not weight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

MIN_LEAF_GRID = (5, 15, 25, 40, 50)
GAIN_RTOL = 1e-9
TASKS = ("regression", "classification")


@dataclass(frozen=True)
class TreeConfig:
    min_samples_leaf: int = 1
    task: str = "regression"
    max_depth: int | None = None

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be non-negative")


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``value`` has one row per node: the weighted mean (regression) or the
    weighted class distribution (classification).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    weighted_n: np.ndarray
    config: TreeConfig
    n_classes: int = 0

    @property
    def node_count(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def structure(self, node: int = 0):
        """Nested ``(feature, threshold, left, right)`` tuples; leaves are ``("leaf", n_samples)``."""
        if self.feature[node] < 0:
            return ("leaf", int(self.n_samples[node]))
        return (
            int(self.feature[node]),
            float(self.threshold[node]),
            self.structure(int(self.left[node])),
            self.structure(int(self.right[node])),
        )

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.node_count):
            rec = {"id": i, "n_samples": int(self.n_samples[i]), "weighted_n": float(self.weighted_n[i])}
            if self.feature[i] >= 0:
                rec.update(
                    feature=int(self.feature[i]),
                    threshold=float(self.threshold[i]),
                    left=int(self.left[i]),
                    right=int(self.right[i]),
                )
            elif self.config.task == "regression":
                rec["prediction"] = float(self.value[i, 0])
            else:
                rec["prediction"] = [float(v) for v in self.value[i]]
            nodes.append(rec)
        return {
            "task": self.config.task,
            "min_samples_leaf": self.config.min_samples_leaf,
            "n_classes": self.n_classes,
            "nodes": nodes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_inputs(X, y, w, task):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValidationError(f"labels length {y.shape} does not match {n} rows")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValidationError(f"weights length {w.shape} does not match {n} rows")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValidationError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ValidationError("at least one weight must be positive")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite")
    if task == "classification":
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.mod(y, 1) == 0):
                raise ValidationError("classification labels must be integer class ids")
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValidationError("class ids must be non-negative")
    else:
        y = y.astype(float)
    return X, y, w


def node_value(y, w, task, n_classes):
    W = w.sum()
    if task == "regression":
        return np.array([np.dot(w, y) / W if W > 0 else y.mean()])
    counts = np.bincount(y, weights=w if W > 0 else None, minlength=n_classes).astype(float)
    return counts / counts.sum()


def _gain_tolerance(y, w, task):
    """Node impurity and the smallest gain treated as a real improvement.

    Regression impurity is the weighted sum of squares about the weighted
    mean; classification impurity is total weight times Gini. Gains are
    compared against ``GAIN_RTOL`` times the impurity (regression) or the
    node weight (classification), which absorbs rounding in the gain sums.
    """
    W = w.sum()
    if task == "regression":
        mu = np.dot(w, y) / W
        impurity = float(np.dot(w, (y - mu) ** 2))
        return impurity, GAIN_RTOL * impurity
    p = np.bincount(y, weights=w) / W
    return float(W * (1.0 - np.dot(p, p))), GAIN_RTOL * float(W)


def _best_split(X, y, w, min_leaf, task, n_classes):
    """Return ``(feature, threshold, gain)`` of the best admissible split or None."""
    m, d = X.shape
    if m < 2 * min_leaf or w.sum() <= 0:
        return None
    impurity, tol = _gain_tolerance(y, w, task)
    if impurity <= tol:
        return None

    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ws = w[order]
    if task == "regression":
        W = w.sum()
        wy = w * (y - np.dot(w, y) / W)
        stats = wy[order][:, :, None]
    else:
        onehot = np.zeros((m, n_classes))
        onehot[np.arange(m), y] = w
        stats = onehot[order]

    # left block = rows [0..i], right block = rows [i+1..m-1]
    wl = np.cumsum(ws, axis=0)[:-1]
    wr = np.cumsum(ws[::-1], axis=0)[::-1][1:]
    sl = np.cumsum(stats, axis=0)[:-1]
    sr = np.cumsum(stats[::-1], axis=0)[::-1][1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        left_term = np.where(wl > 0, np.sum(sl * sl, axis=2) / wl, 0.0)
        right_term = np.where(wr > 0, np.sum(sr * sr, axis=2) / wr, 0.0)
    s_all = stats.sum(axis=0)[0]
    base = np.dot(s_all, s_all) / w.sum()
    gain = left_term + right_term - base

    pos = np.arange(m - 1)[:, None]
    valid = (pos >= min_leaf - 1) & (pos <= m - min_leaf - 1) & (xs[:-1] < xs[1:])
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    if best <= tol:
        return None
    # ties: lowest feature first, then lowest threshold (= lowest position)
    cand_pos, cand_feat = np.nonzero(gain >= best - tol)
    k = np.lexsort((cand_pos, cand_feat))[0]
    i, j = int(cand_pos[k]), int(cand_feat[k])
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return j, float(thr), float(gain[i, j])


def fit_tree(X, y, w=None, config: TreeConfig = TreeConfig()) -> DecisionTree:
    """Grow a weighted CART tree until no admissible split reduces impurity."""
    task = config.task
    X, y, w = _check_inputs(X, y, w, task)
    n_classes = int(y.max()) + 1 if task == "classification" else 0
    min_leaf = config.min_samples_leaf

    feature, threshold, left, right, value, n_samp, w_n = [], [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(node_value(y[idx], w[idx], task, n_classes))
        n_samp.append(idx.size)
        w_n.append(float(w[idx].sum()))
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        split = _best_split(X[idx], y[idx], w[idx], min_leaf, task, n_classes)
        if split is None:
            continue
        j, thr, _ = split
        go_left = X[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.vstack(value),
        np.array(n_samp, dtype=np.int64),
        np.array(w_n),
        config,
        n_classes,
    )


def _leaf_index(tree: DecisionTree, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    used = tree.feature[tree.feature >= 0]
    if used.size and X.shape[1] <= used.max():
        raise ValidationError(f"tree uses feature {used.max()} but input has {X.shape[1]} columns")
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(tree.feature[node] >= 0)
    rows = np.arange(X.shape[0])
    while active.size:
        cur = node[active]
        go_left = X[rows[active], tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
        active = active[tree.feature[node[active]] >= 0]
    return node


def predict(tree: DecisionTree, X) -> np.ndarray:
    """Leaf mean (regression) or most probable class, ties to the lowest id."""
    leaves = _leaf_index(tree, X)
    if tree.config.task == "regression":
        return tree.value[leaves, 0]
    return np.argmax(tree.value[leaves], axis=1)


def evaluate(predictions, y, task: str, weights=None) -> float:
    """(Weighted) mean squared error or misclassification rate."""
    p = np.asarray(predictions)
    y = np.asarray(y)
    if p.shape != y.shape:
        raise ValidationError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    w = np.ones(y.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape:
        raise ValidationError("weights length does not match labels")
    if w.sum() <= 0:
        raise ValidationError("weights must have positive total")
    if task == "regression":
        loss = (p.astype(float) - y.astype(float)) ** 2
    elif task == "classification":
        loss = (p != y).astype(float)
    else:
        raise ValidationError(f"unknown task {task!r}")
    return float(np.dot(w, loss) / w.sum())


def tune_min_leaf(X, y, w, task: str, rng: np.random.Generator, grid=MIN_LEAF_GRID) -> DecisionTree:
    """2-fold cross-validated choice of ``min_samples_leaf``, then refit on all rows.

    Both fold directions are scored with the supplied weights and averaged;
    ties go to the larger ``min_samples_leaf``.
    """
    X, y, w = _check_inputs(X, y, w, task)
    n = X.shape[0]
    if n < 20:
        raise ValidationError("tuning needs at least 20 rows")
    perm = rng.permutation(n)
    folds = (perm[: n // 2], perm[n // 2 :])
    best = None
    for leaf in sorted(grid):
        scores = []
        for a, b in (folds, folds[::-1]):
            if w[a].sum() <= 0 or w[b].sum() <= 0:
                continue
            tree = fit_tree(X[a], y[a], w[a], TreeConfig(leaf, task))
            scores.append(evaluate(predict(tree, X[b]), y[b], task, w[b]))
        if not scores:
            raise ValidationError("a cross-validation fold carries zero total weight")
        score = float(np.mean(scores))
        if best is None or score <= best[0]:
            best = (score, leaf)
    return fit_tree(X, y, w, TreeConfig(best[1], task))
