"""Weighted first-stage linear regression and exposure prediction."""

import numpy as np
import pytest

from odiwi import FirstStageData, fit_weighted_linear, predict_exposure
from odiwi.errors import DimensionMismatch, RankDeficient


def make_data(n=200, d=3, seed=0):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=(n, d))
    coef = np.array([0.5, 1.0, -2.0, 0.25][: d + 1])
    x = coef[0] + r @ coef[1:] + rng.normal(scale=0.4, size=n)
    return FirstStageData(exposures=x, covariates=r)


def test_unweighted_fit_equals_ols():
    data = make_data()
    fit = fit_weighted_linear(data, weights=None, ridge=0.0)
    R = np.column_stack([np.ones(data.n), data.covariates])
    ols, *_ = np.linalg.lstsq(R, data.exposures, rcond=None)
    assert np.max(np.abs(fit.coefficients - ols)) <= 1e-10


def test_weight_scale_invariance():
    data = make_data(seed=1)
    rng = np.random.default_rng(1)
    w = rng.uniform(0.2, 3.0, size=data.n)
    a = fit_weighted_linear(data, w)
    b = fit_weighted_linear(data, 17.3 * w)
    assert np.max(np.abs(a.coefficients - b.coefficients)) <= 1e-10


def test_integer_weights_equal_row_replication():
    data = make_data(n=60, seed=2)
    rng = np.random.default_rng(2)
    w = rng.integers(1, 4, size=60).astype(float)
    weighted = fit_weighted_linear(data, w, ridge=0.0)
    idx = np.repeat(np.arange(60), w.astype(int))
    replicated = FirstStageData(
        exposures=data.exposures[idx], covariates=data.covariates[idx]
    )
    plain = fit_weighted_linear(replicated, weights=None, ridge=0.0)
    assert np.max(np.abs(weighted.coefficients - plain.coefficients)) <= 1e-9


def test_zero_weights_drop_rows():
    data = make_data(n=100, seed=3)
    w = np.ones(100)
    w[60:] = 0.0
    fit = fit_weighted_linear(data, w, ridge=0.0)
    head = FirstStageData(exposures=data.exposures[:60], covariates=data.covariates[:60])
    fit_head = fit_weighted_linear(head, weights=None, ridge=0.0)
    assert np.max(np.abs(fit.coefficients - fit_head.coefficients)) <= 1e-10


def test_collinear_covariates_need_ridge():
    rng = np.random.default_rng(4)
    base = rng.normal(size=100)
    data = FirstStageData(
        exposures=base + rng.normal(scale=0.1, size=100),
        covariates=np.column_stack([base, 2.0 * base]),
    )
    with pytest.raises(RankDeficient):
        fit_weighted_linear(data, ridge=0.0)
    fit = fit_weighted_linear(data)  # default ridge regularizes
    assert np.all(np.isfinite(fit.coefficients))


def test_prediction_and_dimension_checks():
    data = make_data(d=2, seed=5)
    fit = fit_weighted_linear(data)
    preds = predict_exposure(fit, data.covariates)
    assert preds.shape == (data.n,)
    # in-sample predictions track the exposures reasonably well
    resid = data.exposures - preds
    assert resid.std() < data.exposures.std()
    with pytest.raises(DimensionMismatch):
        predict_exposure(fit, np.zeros((5, 4)))
    with pytest.raises(DimensionMismatch):
        fit_weighted_linear(data, weights=np.ones(7))


def test_weight_checksum_distinguishes_weightings():
    data = make_data(seed=6)
    a = fit_weighted_linear(data, np.ones(data.n))
    b = fit_weighted_linear(data, np.linspace(0.5, 1.5, data.n))
    assert a.weight_checksum != b.weight_checksum


def test_predictor_serialization_round_trip():
    from odiwi import LinearPredictor

    data = make_data(seed=7)
    fit = fit_weighted_linear(data)
    back = LinearPredictor.from_dict(fit.to_dict())
    assert np.allclose(back.coefficients, fit.coefficients)
    assert back.ridge == fit.ridge
    assert back.weight_checksum == fit.weight_checksum
