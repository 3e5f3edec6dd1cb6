"""Data-generating processes and the replication experiment harness."""

import numpy as np
import pytest
from scipy.stats import ks_2samp

from odiwi import OdiwiConfig, SimConfig, draw_truth, gen_first_stage, gen_second_stage
from odiwi.sim import run_experiment, run_replication, summarize

FAST = OdiwiConfig(iterations=2, num_inits=1)


def test_null_signal_gives_pure_noise_exposures():
    config = SimConfig(n_first=2000, covariate_dim=3, gamma=(0.0, 0.0, 0.0), sigma_eps=1.0)
    rng = np.random.default_rng(0)
    truth = draw_truth(config, rng)
    data = gen_first_stage(config, truth, rng)
    assert abs(data.exposures.mean()) < 4.0 / np.sqrt(2000)


def test_noiseless_exposures_recover_gamma_exactly():
    config = SimConfig(n_first=500, covariate_dim=3, sigma_eps=1e-12)
    rng = np.random.default_rng(1)
    truth = draw_truth(config, rng)
    data = gen_first_stage(config, truth, rng)
    R = np.column_stack([np.ones(data.n), data.covariates])
    coef, *_ = np.linalg.lstsq(R, data.exposures, rcond=None)
    assert np.max(np.abs(coef[1:] - truth.gamma)) < 1e-8


def test_default_noise_targets_snr_four():
    # SNR = Var(gamma' r)/sigma_eps^2 = 4 means oracle R^2 = 4/5
    config = SimConfig(n_first=20000, covariate_dim=3)
    rng = np.random.default_rng(2)
    truth = draw_truth(config, rng)
    data = gen_first_stage(config, truth, rng)
    signal = data.covariates @ truth.gamma
    r2 = 1.0 - truth.sigma_eps**2 / data.exposures.var()
    assert abs(r2 - 0.8) < 0.03
    assert np.isclose(truth.sigma_eps, np.sqrt(truth.gamma @ truth.sigma @ truth.gamma / 4.0))
    assert abs(signal.var() / truth.sigma_eps**2 - 4.0) < 0.2


def test_null_outcome_model_has_half_prevalence():
    config = SimConfig(beta_x=0.0, beta0=0.0, n_second=4000)
    rng = np.random.default_rng(3)
    truth = draw_truth(config, rng)
    sim2 = gen_second_stage(config, truth, rng)
    assert abs(sim2.data.outcomes.mean() - 0.5) < 4.0 / (2.0 * np.sqrt(4000))
    # symmetric exposure + symmetric link also gives prevalence 1/2
    config = SimConfig(beta_x=1.5, beta0=0.0, n_second=4000)
    sim2 = gen_second_stage(config, truth, rng)
    assert abs(sim2.data.outcomes.mean() - 0.5) < 0.05


def test_extreme_intercept_is_flagged_not_raised():
    config = SimConfig(beta0=-50.0, beta_x=0.0, n_first=200, n_second=400)
    rows = run_replication(config, FAST, 0, 0)
    assert all(r.flags != "" for r in rows)
    assert all(np.isnan(r.beta_hat) for r in rows)


def test_prior_shift_holds_by_default_and_breaks_with_the_toggle():
    passes, rejects = 0, 0
    reps = 40
    for rep in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([11, rep]))
        base = SimConfig(n_first=500, n_second=2000)
        truth = draw_truth(base, rng)
        x1 = gen_first_stage(base, truth, rng).exposures
        x2 = gen_second_stage(base, truth, rng).true_exposures
        if ks_2samp(x1, x2).pvalue > 0.01:
            passes += 1
        shifted = SimConfig(n_first=500, n_second=2000, shift_sd=0.5)
        x2s = gen_second_stage(shifted, truth, rng).true_exposures
        if ks_2samp(x1, x2s).pvalue <= 0.01:
            rejects += 1
    assert passes >= 0.95 * reps
    assert rejects >= 0.95 * reps


def test_experiment_bookkeeping_and_summary():
    config = SimConfig(n_first=200, n_second=400, replications=3, seed=5)
    rows = run_experiment(config, beta_x_values=[0.0, 1.0], odiwi_config=FAST)
    assert len(rows) == 2 * 2 * 3  # estimators x cells x replications
    summary = summarize(rows)
    assert len(summary) == 4
    cell = next(s for s in summary if s["estimator"] == "naive" and s["beta_x_true"] == 1.0)
    errs = np.array(
        [r.error for r in rows if r.estimator == "naive" and r.beta_x_true == 1.0]
    )
    assert np.isclose(cell["mean_error"], errs.mean())
    assert cell["n_ok"] + cell["n_failed"] == 3


def test_serial_and_parallel_runs_are_bitwise_identical():
    config = SimConfig(n_first=200, n_second=400, replications=4, seed=9)
    serial = run_experiment(config, beta_x_values=[1.0], odiwi_config=FAST, n_jobs=1)
    parallel = run_experiment(config, beta_x_values=[1.0], odiwi_config=FAST, n_jobs=3)
    assert serial == parallel
    again = run_experiment(config, beta_x_values=[1.0], odiwi_config=FAST, n_jobs=1)
    assert serial == again


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_first=0)
    with pytest.raises(ValueError):
        SimConfig(sigma_eps=-1.0)
    with pytest.raises(ValueError):
        SimConfig(covariate_dim=3, gamma=(1.0, 2.0))


def test_true_exposures_are_kept_out_of_the_estimator_view():
    config = SimConfig(n_first=100, n_second=200)
    rng = np.random.default_rng(6)
    truth = draw_truth(config, rng)
    sim2 = gen_second_stage(config, truth, rng)
    assert not hasattr(sim2.data, "true_exposures")
    assert sim2.data.imputed_exposures is None
    assert sim2.true_exposures.shape == (200,)
