"""Dataset container, CSV ingestion and preprocessing.

All transforms return new :class:`Dataset` values; arrays inside a dataset
are flagged read-only so a dataset can be shared freely.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IngestionError, ValidationError

RANK_TOL = 1e-10


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with optional labels.

    ``labels`` holds floats for regression and integer class ids
    ``0..C-1`` for classification.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    label_name: str = "label"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValidationError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("features contain NaN or infinite entries")
        object.__setattr__(self, "features", _frozen(X))

        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValidationError(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "feature_names", names)

        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.ndim != 1 or y.shape[0] != X.shape[0]:
                raise ValidationError(f"labels must be a vector of length {X.shape[0]}, got shape {y.shape}")
            if np.issubdtype(y.dtype, np.integer) or y.dtype == bool:
                y = y.astype(np.int64)
                if y.min() < 0:
                    raise ValidationError("class labels must be non-negative ids")
            else:
                y = y.astype(float)
                if not np.all(np.isfinite(y)):
                    raise ValidationError("labels contain NaN or infinite entries")
            object.__setattr__(self, "labels", _frozen(y))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def task(self) -> str | None:
        """``"classification"``, ``"regression"`` or None when unlabeled."""
        if self.labels is None:
            return None
        return "classification" if np.issubdtype(self.labels.dtype, np.integer) else "regression"

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        y = None if self.labels is None else self.labels[rows]
        return Dataset(self.features[rows], y, self.feature_names, self.label_name)

    def select(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return Dataset(
            self.features[:, columns],
            self.labels,
            tuple(self.feature_names[j] for j in columns),
            self.label_name,
        )


@dataclass(frozen=True, eq=False)
class ScalerParams:
    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        sd = np.asarray(self.stddevs, dtype=float)
        if np.any(sd <= 0):
            raise ValidationError("scaler stddevs must be strictly positive")
        object.__setattr__(self, "means", _frozen(np.asarray(self.means, dtype=float)))
        object.__setattr__(self, "stddevs", _frozen(sd))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.means) / self.stddevs


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """Affine map ``x -> A (x - b)`` with full row rank ``A``."""

    matrix: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        d_out, d_in = A.shape
        if d_out > d_in:
            raise ValidationError(f"projection has {d_out} rows but only {d_in} columns")
        s = np.linalg.svd(A, compute_uv=False)
        rank = int(np.sum(s > RANK_TOL * max(s[0], 1.0))) if s.size else 0
        if rank < d_out:
            raise ValidationError(f"projection matrix is rank deficient (rank {rank} < {d_out})")
        b = np.zeros(d_in) if self.offset is None else np.asarray(self.offset, dtype=float)
        if b.shape != (d_in,):
            raise ValidationError(f"offset must have length {d_in}")
        object.__setattr__(self, "matrix", _frozen(A))
        object.__setattr__(self, "offset", _frozen(b))


def _parse_float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def load_csv(path, has_header=True, label_column=None, categorical_labels=None) -> Dataset:
    """Read a comma-separated numeric table.

    Parameters
    ----------
    path : str or Path
    has_header : bool
        Whether the first row holds column names.
    label_column : str, int or None
        Column holding labels, by header name or zero-based index.
    categorical_labels : bool or None
        Force labels to be treated as classes (True) or reals (False).
        By default labels are real when every cell parses as a number,
        otherwise classes numbered in order of first appearance.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or (has_header and len(rows) == 1):
        raise IngestionError(f"{path}: empty file")

    header = [h.strip() for h in rows[0]] if has_header else None
    body = rows[1:] if has_header else rows
    width = len(header) if header is not None else len(body[0])
    names = header if header is not None else [f"x{j}" for j in range(width)]

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise IngestionError(f"{path}: label column {label_column!r} not found")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if label_idx < 0:
                label_idx += width
            if not 0 <= label_idx < width:
                raise IngestionError(f"{path}: label column index {label_column} out of range")
    if label_idx is not None and width < 2:
        raise IngestionError(f"{path}: no feature columns besides the label")

    first_line = 2 if has_header else 1
    feat_cols = [j for j in range(width) if j != label_idx]
    X = np.empty((len(body), len(feat_cols)))
    raw_labels = []
    for i, row in enumerate(body):
        line = first_line + i
        if len(row) != width:
            raise IngestionError(f"{path}: expected {width} fields, found {len(row)}", row=line)
        for k, j in enumerate(feat_cols):
            try:
                X[i, k] = _parse_float(row[j].strip())
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric feature value {row[j]!r}", row=line, column=names[j]
                ) from None
        if label_idx is not None:
            raw_labels.append(row[label_idx].strip())

    labels = None
    if label_idx is not None:
        labels = _convert_labels(raw_labels, categorical_labels)
    return Dataset(
        X,
        labels,
        tuple(names[j] for j in feat_cols),
        names[label_idx] if label_idx is not None else "label",
    )


def _convert_labels(raw, categorical):
    if categorical is not True:
        try:
            return np.array([_parse_float(v) for v in raw])
        except ValueError:
            if categorical is False:
                raise IngestionError("non-numeric label with categorical_labels=False") from None
    mapping: dict[str, int] = {}
    return np.array([mapping.setdefault(v, len(mapping)) for v in raw], dtype=np.int64)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (np.integer,)) else str(v)


def save_csv(ds: Dataset, path) -> None:
    """Write ``ds`` with a header row; labels (if any) go in the last column."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(ds.feature_names)
        if ds.labels is not None:
            header.append(ds.label_name)
        writer.writerow(header)
        for i in range(ds.n):
            row = [_fmt(v) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(_fmt(ds.labels[i]))
            writer.writerow(row)


def subsample(ds: Dataset, max_rows: int, rng: np.random.Generator) -> Dataset:
    """Uniformly keep at most ``max_rows`` rows (original order preserved)."""
    if max_rows < 1:
        raise ValidationError("max_rows must be >= 1")
    if ds.n <= max_rows:
        return ds
    rows = np.sort(rng.choice(ds.n, size=max_rows, replace=False))
    return ds.take(rows)


def fit_scaler(X) -> ScalerParams:
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValidationError("standardization needs at least 2 rows")
    means = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    # constant columns: keep shape, record unit scale
    sd = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(means)), sd, 1.0)
    return ScalerParams(means, sd)


def standardize(ds: Dataset) -> tuple[Dataset, ScalerParams]:
    """Center each column and scale to unit sample (n-1) standard deviation."""
    params = fit_scaler(ds.features)
    Z = params.transform(ds.features)
    # constant columns collapse to exact zeros
    Z[:, np.all(ds.features == ds.features[0], axis=0)] = 0.0
    return Dataset(Z, ds.labels, ds.feature_names, ds.label_name), params


def augment_with_noise(ds: Dataset, target_width: int, rng: np.random.Generator) -> Dataset:
    """Append i.i.d. standard normal columns until the width is ``target_width``."""
    if target_width < ds.d:
        raise ValidationError(f"target_width {target_width} is smaller than current width {ds.d}")
    extra = target_width - ds.d
    if extra == 0:
        return ds
    noise = rng.standard_normal((ds.n, extra))
    names = ds.feature_names + tuple(f"noise_{j}" for j in range(extra))
    return Dataset(np.hstack([ds.features, noise]), ds.labels, names, ds.label_name)


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[(v.size - 1) // 2])


def binarize_labels(ds: Dataset) -> Dataset:
    """Label 1 where y exceeds the (lower) median of y, else 0."""
    if ds.labels is None:
        raise ValidationError("dataset has no labels to binarize")
    y = np.asarray(ds.labels, dtype=float)
    binary = (y > lower_median(y)).astype(np.int64)
    return Dataset(ds.features, binary, ds.feature_names, ds.label_name)


def project(ds: Dataset, spec: ProjectionSpec) -> Dataset:
    """Map every row through ``x -> A (x - b)``."""
    if spec.matrix.shape[1] != ds.d:
        raise ValidationError(f"projection expects width {spec.matrix.shape[1]}, dataset has {ds.d}")
    Z = (ds.features - spec.offset) @ spec.matrix.T
    names = tuple(f"proj_{j}" for j in range(Z.shape[1]))
    return Dataset(Z, ds.labels, names, ds.label_name)


def selector_matrix(columns: Sequence[int], d: int) -> np.ndarray:
    """Rows of the identity picking ``columns`` (the feature-selection form of A)."""
    A = np.zeros((len(columns), d))
    A[np.arange(len(columns)), list(columns)] = 1.0
    return A
