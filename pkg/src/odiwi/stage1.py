"""First-stage exposure prediction: weighted linear least squares with ridge.

The hypothesis class is linear in the geographic covariates. The fit
minimizes the importance-weighted squared error plus an (unweighted) ridge
penalty on the non-intercept coefficients.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .adapt import ImportanceWeights
from .errors import DimensionMismatch, RankDeficient

DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True)
class FirstStageData:
    """Training set: directly measured exposures and geographic covariates."""

    exposures: np.ndarray
    covariates: np.ndarray
    row_ids: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.exposures, dtype=float).ravel()
        r = np.asarray(self.covariates, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        if x.size != r.shape[0]:
            raise ValueError("exposures and covariates row counts differ")
        if np.any(~np.isfinite(x)) or np.any(~np.isfinite(r)):
            raise ValueError("first-stage data contains non-finite values")
        ids = self.row_ids
        ids = np.arange(x.size) if ids is None else np.asarray(ids)
        object.__setattr__(self, "exposures", x)
        object.__setattr__(self, "covariates", r)
        object.__setattr__(self, "row_ids", ids)

    @property
    def n(self):
        return self.exposures.size

    @property
    def covariate_dim(self):
        return self.covariates.shape[1]


@dataclass(frozen=True)
class LinearPredictor:
    """Fitted linear exposure predictor (intercept first)."""

    coefficients: np.ndarray
    ridge: float
    weight_checksum: str = ""

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).ravel()
        if np.any(~np.isfinite(coef)):
            raise ValueError("non-finite coefficients")
        object.__setattr__(self, "coefficients", coef)

    @property
    def covariate_dim(self):
        return self.coefficients.size - 1

    def to_dict(self):
        return {
            "coefficients": self.coefficients.tolist(),
            "ridge": float(self.ridge),
            "weight_checksum": self.weight_checksum,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            coefficients=np.asarray(d["coefficients"], dtype=float),
            ridge=float(d["ridge"]),
            weight_checksum=d.get("weight_checksum", ""),
        )


def _weight_values(weights, n):
    if weights is None:
        return np.ones(n)
    if isinstance(weights, ImportanceWeights):
        w = weights.values
    else:
        w = np.asarray(weights, dtype=float).ravel()
    if w.size != n:
        raise DimensionMismatch(f"{w.size} weights for {n} training rows")
    if np.any(w < 0):
        raise ValueError("training weights must be non-negative")
    return w


def fit_weighted_linear(data, weights=None, ridge=DEFAULT_RIDGE):
    """Closed-form weighted least squares with a ridge stabilizer.

    Weights are rescaled to mean one internally, which makes the solution
    invariant to a positive rescaling of all weights. The intercept is not
    penalized.
    """
    w = _weight_values(weights, data.n)
    total = w.sum()
    if total <= 0:
        raise ValueError("training weights sum to zero")
    w = w * (data.n / total)
    R = np.column_stack([np.ones(data.n), data.covariates])
    k = R.shape[1]
    wr = R * w[:, None]
    gram = (wr.T @ R) / data.n
    rhs = (wr.T @ data.exposures) / data.n
    penalty = np.eye(k) * ridge
    penalty[0, 0] = 0.0
    system = gram + penalty
    if ridge == 0 and np.linalg.cond(system) > 1e12:
        raise RankDeficient("weighted covariates are collinear and ridge is zero")
    try:
        coef = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(str(exc)) from exc
    checksum = hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest()[:16]
    return LinearPredictor(coefficients=coef, ridge=ridge, weight_checksum=checksum)


def predict_exposure(predictor, covariates):
    """Impute exposures at new locations from their geographic covariates."""
    r = np.asarray(covariates, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[1] != predictor.covariate_dim:
        raise DimensionMismatch(
            f"{r.shape[1]} covariate columns, predictor expects {predictor.covariate_dim}"
        )
    return predictor.coefficients[0] + r @ predictor.coefficients[1:]
