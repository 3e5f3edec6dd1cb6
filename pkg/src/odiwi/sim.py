"""Synthetic data generation and replication experiments.

Geographic covariates are zero-mean multivariate normal with a random
covariance U'U (U entries iid Uniform[0,1]); the true exposure is linear in
the covariates plus Gaussian noise; a binary outcome follows a logistic
model in the true exposure. Replications are independent, each seeded from
(seed, cell, rep), so serial and parallel runs produce identical tables.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace, asdict

import numpy as np

from .errors import OdiwiError
from .estimator import (
    OdiwiConfig,
    SecondStageData,
    fit_second_stage,
    odiwi_estimate,
)
from .glm import bernoulli_logit
from .stage1 import FirstStageData, fit_weighted_linear, predict_exposure

NAIVE = "naive"
ODIWI = "odiwi"


@dataclass(frozen=True)
class SimConfig:
    """Data-generating process parameters for one simulation cell."""

    n_first: int = 500
    n_second: int = 2000
    covariate_dim: int = 3
    gamma: tuple = None  # default (1,...,1)/sqrt(d)
    sigma_eps: float = None  # default set per replication so that SNR = snr
    snr: float = 4.0
    beta0: float = 0.0
    beta_x: float = 1.5
    replications: int = 100
    seed: int = 0
    shift_sd: float = 0.0  # second-stage covariate mean shift, in marginal sds

    def __post_init__(self):
        if min(self.n_first, self.n_second, self.covariate_dim) < 1:
            raise ValueError("sizes must be positive")
        if self.sigma_eps is not None and self.sigma_eps <= 0:
            raise ValueError("sigma_eps must be positive")
        if self.gamma is not None:
            g = tuple(float(v) for v in self.gamma)
            if len(g) != self.covariate_dim:
                raise ValueError("gamma length must equal covariate_dim")
            object.__setattr__(self, "gamma", g)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ReplicationTruth:
    """Per-replication ground truth shared by both stages."""

    sigma: np.ndarray
    gamma: np.ndarray
    sigma_eps: float


@dataclass(frozen=True)
class SimulatedSecondStage:
    """Second-stage data plus the true exposures, kept out of estimators' view."""

    data: SecondStageData
    true_exposures: np.ndarray


def draw_truth(config, rng):
    d = config.covariate_dim
    U = rng.uniform(0.0, 1.0, size=(d, d))
    sigma = U.T @ U
    if config.gamma is not None:
        gamma = np.asarray(config.gamma, dtype=float)
    else:
        gamma = np.ones(d) / np.sqrt(d)
    if config.sigma_eps is not None:
        sigma_eps = float(config.sigma_eps)
    else:
        signal_var = float(gamma @ sigma @ gamma)
        sigma_eps = float(np.sqrt(signal_var / config.snr))
    return ReplicationTruth(sigma=sigma, gamma=gamma, sigma_eps=sigma_eps)


def gen_first_stage(config, truth, rng):
    """Monitoring-site sample: exact exposures and geographic covariates."""
    r = rng.multivariate_normal(
        np.zeros(config.covariate_dim), truth.sigma, size=config.n_first
    )
    eps = rng.normal(0.0, truth.sigma_eps, size=config.n_first)
    x = r @ truth.gamma + eps
    return FirstStageData(exposures=x, covariates=r)


def gen_second_stage(config, truth, rng):
    """Subject sample: binary outcomes from a logistic model in the true exposure."""
    mean = config.shift_sd * np.sqrt(np.diag(truth.sigma))
    r = rng.multivariate_normal(mean, truth.sigma, size=config.n_second)
    eps = rng.normal(0.0, truth.sigma_eps, size=config.n_second)
    x = r @ truth.gamma + eps
    eta = config.beta0 + config.beta_x * x
    y = (rng.uniform(size=config.n_second) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    data = SecondStageData(outcomes=y, covariates=None, geo_covariates=r)
    return SimulatedSecondStage(data=data, true_exposures=x)


@dataclass(frozen=True)
class MetricsRow:
    """One estimator on one replication of one simulation cell."""

    estimator: str
    beta_x_true: float
    rep: int
    beta_hat: float
    error: float
    stage1_rmse: float
    flags: str = ""


def _rmse(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def run_replication(config, odiwi_config, cell, rep):
    """Both estimators on one fresh draw of the DGP; failures become flagged rows."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, cell, rep]))
    truth = draw_truth(config, rng)
    dstar = gen_first_stage(config, truth, rng)
    sim2 = gen_second_stage(config, truth, rng)
    d = sim2.data
    rows = []

    try:
        predictor = fit_weighted_linear(dstar, weights=None)
        x_hat = predict_exposure(predictor, d.geo_covariates)
        fit = fit_second_stage(d, x_hat, bernoulli_logit())
        rows.append(
            MetricsRow(
                NAIVE,
                config.beta_x,
                rep,
                float(fit.beta[1]),
                float(fit.beta[1] - config.beta_x),
                _rmse(x_hat, sim2.true_exposures),
            )
        )
    except OdiwiError as exc:
        rows.append(
            MetricsRow(NAIVE, config.beta_x, rep, np.nan, np.nan, np.nan, type(exc).__name__)
        )

    sub_seed = int(np.random.SeedSequence([config.seed, cell, rep, 1]).generate_state(1)[0])
    try:
        result = odiwi_estimate(
            dstar, d, bernoulli_logit(), replace(odiwi_config, seed=sub_seed)
        )
        rows.append(
            MetricsRow(
                ODIWI,
                config.beta_x,
                rep,
                float(result.final_beta[1]),
                float(result.final_beta[1] - config.beta_x),
                _rmse(result.final_exposures, sim2.true_exposures),
            )
        )
    except OdiwiError as exc:
        rows.append(
            MetricsRow(ODIWI, config.beta_x, rep, np.nan, np.nan, np.nan, type(exc).__name__)
        )
    return rows


def _worker(args):
    return run_replication(*args)


def run_experiment(config, beta_x_values=None, odiwi_config=None, n_jobs=1):
    """Replication experiment over a grid of true exposure effects.

    Returns a flat list of MetricsRow, ordered by (cell, rep, estimator),
    identical for serial and parallel execution.
    """
    odiwi_config = odiwi_config if odiwi_config is not None else OdiwiConfig()
    cells = (
        [config.beta_x]
        if beta_x_values is None
        else [float(b) for b in beta_x_values]
    )
    tasks = [
        (replace(config, beta_x=bx), odiwi_config, cell, rep)
        for cell, bx in enumerate(cells)
        for rep in range(config.replications)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_worker, tasks, chunksize=4))
    else:
        results = [run_replication(*t) for t in tasks]
    return [row for rows in results for row in rows]


def summarize(rows):
    """Per (estimator, true effect) cell: mean, sd, and 95% range of the error.

    Returns a list of dicts, the ribbon data for effect-sweep plots.
    """
    cells = {}
    for row in rows:
        cells.setdefault((row.estimator, row.beta_x_true), []).append(row)
    out = []
    for (est, bx) in sorted(cells, key=lambda k: (k[1], k[0])):
        group = cells[(est, bx)]
        errs = np.array([r.error for r in group if r.flags == ""])
        rmses = np.array([r.stage1_rmse for r in group if r.flags == ""])
        out.append(
            {
                "estimator": est,
                "beta_x_true": bx,
                "n_ok": int(errs.size),
                "n_failed": int(len(group) - errs.size),
                "mean_error": float(errs.mean()) if errs.size else np.nan,
                "sd_error": float(errs.std(ddof=1)) if errs.size > 1 else np.nan,
                "q025_error": float(np.quantile(errs, 0.025)) if errs.size else np.nan,
                "q975_error": float(np.quantile(errs, 0.975)) if errs.size else np.nan,
                "mean_abs_error": float(np.abs(errs).mean()) if errs.size else np.nan,
                "mean_stage1_rmse": float(rmses.mean()) if rmses.size else np.nan,
            }
        )
    return out
