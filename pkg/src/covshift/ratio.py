"""Importance weights from a source-vs-target probabilistic classifier.

Source rows are labelled 0 and target rows 1. A tuned L1 logistic model on
standardized quadratic features estimates ``P(target | x)`` and Bayes' rule
turns its odds into the density ratio ``p_target(x) / p_source(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ScalerParams, fit_scaler
from .errors import ValidationError
from .logistic import (
    C_GRID,
    ExpansionSpec,
    LogisticModel,
    SolverConfig,
    expand_quadratic,
    predict_proba,
    tune_l1_logistic,
)

PROBA_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class RatioModel:
    logistic: LogisticModel
    expansion: ExpansionSpec
    expansion_scaler: ScalerParams
    prior_ratio: float
    n_features: int

    def __post_init__(self):
        if not (np.isfinite(self.prior_ratio) and self.prior_ratio > 0):
            raise ValidationError("prior_ratio must be positive and finite")

    def summary(self) -> dict:
        return {
            "reg_c": float(self.logistic.reg_c),
            "holdout_log_loss": None
            if self.logistic.holdout_log_loss is None
            else float(self.logistic.holdout_log_loss),
            "prior_ratio": float(self.prior_ratio),
            "nonzero_coefficients": int(np.count_nonzero(self.logistic.coefficients)),
        }


def _matrix(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty matrix")
    return X


def weights_from_proba(proba, prior_ratio: float = 1.0) -> np.ndarray:
    """``prior_ratio * p / (1 - p)`` with ``p`` clipped to ``[1e-6, 1 - 1e-6]``."""
    p = np.clip(np.asarray(proba, dtype=float), PROBA_FLOOR, 1.0 - PROBA_FLOOR)
    return prior_ratio * p / (1.0 - p)


def fit_density_ratio(
    source_features,
    target_features,
    rng: np.random.Generator,
    expansion: ExpansionSpec = ExpansionSpec(),
    grid=C_GRID,
    solver: SolverConfig = SolverConfig(),
) -> RatioModel:
    """Fit the source/target classifier that defines the weight function."""
    src = _matrix(source_features, "source features")
    tgt = _matrix(target_features, "target features")
    if src.shape[1] != tgt.shape[1]:
        raise ValidationError(f"source has {src.shape[1]} columns but target has {tgt.shape[1]}")
    Z = expand_quadratic(np.vstack([src, tgt]), expansion)
    scaler = fit_scaler(Z)
    labels = np.concatenate([np.zeros(src.shape[0], dtype=int), np.ones(tgt.shape[0], dtype=int)])
    model = tune_l1_logistic(scaler.transform(Z), labels, rng, grid, solver)
    return RatioModel(model, expansion, scaler, src.shape[0] / tgt.shape[0], src.shape[1])


def predict_target_proba(model: RatioModel, features) -> np.ndarray:
    X = _matrix(features, "features")
    if X.shape[1] != model.n_features:
        raise ValidationError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    Z = model.expansion_scaler.transform(expand_quadratic(X, model.expansion))
    return predict_proba(model.logistic, Z)


def predict_weights(model: RatioModel, features) -> np.ndarray:
    """Estimated density ratio target/source at each row."""
    return weights_from_proba(predict_target_proba(model, features), model.prior_ratio)
