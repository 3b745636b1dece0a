"""Synthetic covariate shift by probit allocation along a random direction.

Rows are projected onto a random direction ``u``; each row gets the score
``s = Phi((u.x - median) / sigma)`` and joins the training side with
probability ``s``. The training-side density ratio test/train is then
``(1 - s) / s``. ``sigma`` is shrunk until the empirical ESS of those
weights falls below a target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .data import lower_median
from .errors import CalibrationError, ValidationError
from .ess import empirical_ess

SCORE_CLIP = 1e-12
MAX_HALVINGS = 60
MIN_SIDE_ROWS = 10
MIN_CALIBRATION_ROWS = 200


@dataclass(frozen=True, eq=False)
class ShiftAssignment:
    direction: np.ndarray
    sigma: float
    scores: np.ndarray
    is_train: np.ndarray
    true_weights_train: np.ndarray

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if self.scores.shape != self.is_train.shape:
            raise ValidationError("scores and allocation mask differ in length")
        if self.true_weights_train.shape != (int(self.is_train.sum()),):
            raise ValidationError("true weights must align with the training rows")

    @property
    def train_rows(self) -> np.ndarray:
        return np.flatnonzero(self.is_train)

    @property
    def test_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.is_train)

    @property
    def ess(self) -> float:
        return empirical_ess(self.true_weights_train)

    def to_dict(self) -> dict:
        return {
            "direction": [float(v) for v in self.direction],
            "sigma": float(self.sigma),
            "ess": self.ess,
            "n_train": int(self.is_train.sum()),
            "n_test": int((~self.is_train).sum()),
        }


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-arr / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def sample_direction(d: int, rng: np.random.Generator) -> np.ndarray:
    """Direction with i.i.d. Uniform[-1, 1] entries."""
    if d < 1:
        raise ValidationError("dimension must be >= 1")
    return rng.uniform(-1.0, 1.0, size=d)


def _projection(X, direction):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    u = np.asarray(direction, dtype=float).reshape(-1)
    if u.size != X.shape[1]:
        raise ValidationError(f"direction has {u.size} entries for {X.shape[1]} columns")
    if not np.any(u != 0):
        raise ValidationError("direction must not be the zero vector")
    return X @ u


def _scores_from_projection(proj, sigma):
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    s = std_normal_cdf((proj - lower_median(proj)) / sigma)
    return np.clip(np.atleast_1d(s), SCORE_CLIP, 1.0 - SCORE_CLIP)


def compute_scores(X, direction, sigma: float) -> np.ndarray:
    """Probit scores of the centred projections, clipped away from 0 and 1."""
    return _scores_from_projection(_projection(X, direction), sigma)


def allocate(scores, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(score) draws; True sends the row to training."""
    s = np.asarray(scores, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise ValidationError("scores must lie in [0, 1]")
    return rng.random(s.shape) < s


def true_weights(scores_on_train) -> np.ndarray:
    """Test/train density ratio ``(1 - s) / s`` on training rows."""
    s = np.asarray(scores_on_train, dtype=float)
    if np.any(s <= 0) or np.any(s >= 1):
        raise ValidationError("scores must lie strictly inside (0, 1)")
    return (1.0 - s) / s


def calibrate_sigma(X, direction, rng: np.random.Generator, ess_target: float = 0.01) -> ShiftAssignment:
    """Halve ``sigma`` from the projection stddev until the training-side ESS drops below target.

    Each trial reallocates rows from its own sub-stream, so the accepted
    assignment depends only on the generator state and the data. Raises
    :class:`CalibrationError` if 60 halvings do not reach the target with at
    least 10 rows on each side.
    """
    proj = _projection(X, direction)
    n = proj.size
    if n < MIN_CALIBRATION_ROWS:
        raise ValidationError(f"calibration needs at least {MIN_CALIBRATION_ROWS} rows, got {n}")
    if not 0 < ess_target <= 1:
        raise ValidationError("ess_target must lie in (0, 1]")
    sigma = float(np.std(proj, ddof=1))
    if not sigma > 0:
        raise CalibrationError("projections are constant; resample the direction")
    base = int(rng.integers(2**63 - 1))
    u = np.asarray(direction, dtype=float).reshape(-1)
    for trial in range(MAX_HALVINGS + 1):
        scores = _scores_from_projection(proj, sigma)
        is_train = allocate(scores, np.random.default_rng([base, trial]))
        n_train = int(is_train.sum())
        if MIN_SIDE_ROWS <= n_train <= n - MIN_SIDE_ROWS:
            w = true_weights(scores[is_train])
            # ESS <= 1 always, so a target of 1 is met immediately
            if empirical_ess(w) < ess_target or ess_target >= 1.0:
                return ShiftAssignment(u.copy(), sigma, scores, is_train, w)
        sigma *= 0.5
    raise CalibrationError(
        f"ESS target {ess_target} not reached after {MAX_HALVINGS} halvings of sigma"
    )
