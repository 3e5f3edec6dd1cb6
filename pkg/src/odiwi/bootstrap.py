"""Percentile bootstrap confidence intervals for the iterated estimator.

Each replicate resamples rows with replacement, independently in the first
and second stage, and reruns the entire pipeline (designs and weights
included). Parametric GLM intervals understate the uncertainty added by the
iterative imputations, hence the resampling approach.
"""

from dataclasses import dataclass

import numpy as np

from .errors import OdiwiError, TooManyFailures
from .estimator import SecondStageData, odiwi_estimate
from .stage1 import FirstStageData

DEFAULT_REPLICATES = 200
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class BootstrapResult:
    """Point estimate, replicate estimates, and a percentile interval."""

    point_estimate: float
    replicate_estimates: np.ndarray
    interval: tuple
    num_replicates: int
    level: float
    num_failed: int = 0
    point_trajectory: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(
            self, "replicate_estimates", np.asarray(self.replicate_estimates, dtype=float)
        )


def percentile_interval(estimates, level):
    a = 1.0 - level
    lo, hi = np.quantile(np.asarray(estimates, dtype=float), [a / 2.0, 1.0 - a / 2.0])
    return (float(lo), float(hi))


def _resample(dstar, d, rng):
    idx1 = rng.integers(0, dstar.n, size=dstar.n)
    idx2 = rng.integers(0, d.n, size=d.n)
    dstar_b = FirstStageData(
        exposures=dstar.exposures[idx1],
        covariates=dstar.covariates[idx1],
        row_ids=dstar.row_ids[idx1],
    )
    d_b = SecondStageData(
        outcomes=d.outcomes[idx2],
        covariates=d.covariates[idx2] if d.covariate_dim else None,
        geo_covariates=d.geo_covariates[idx2],
        row_ids=d.row_ids[idx2],
    )
    return dstar_b, d_b


def bootstrap_ci(
    dstar,
    d,
    family,
    odiwi_config,
    num_replicates=DEFAULT_REPLICATES,
    level=0.95,
    seed=0,
    coef_index=1,
    resample_first_stage=True,
):
    """Percentile bootstrap for one coefficient of the iterated estimate.

    Failed replicates (separation, rank deficiency) are dropped and counted;
    more than 10% failures raises TooManyFailures. Each replicate's RNG is
    derived from (seed, replicate id), so the replicate vector is
    reproducible and order-independent.
    """
    if num_replicates < 50:
        raise ValueError("need at least 50 bootstrap replicates")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")

    point = odiwi_estimate(dstar, d, family, odiwi_config)
    point_estimate = float(point.final_beta[coef_index])
    point_trajectory = np.array(
        [rec.beta[coef_index] for rec in point.trajectory], dtype=float
    )

    estimates = []
    failed = 0
    for b in range(num_replicates):
        ss = np.random.SeedSequence([seed, b])
        rng = np.random.default_rng(ss)
        if resample_first_stage:
            dstar_b, d_b = _resample(dstar, d, rng)
        else:
            idx2 = rng.integers(0, d.n, size=d.n)
            dstar_b = dstar
            d_b = SecondStageData(
                outcomes=d.outcomes[idx2],
                covariates=d.covariates[idx2] if d.covariate_dim else None,
                geo_covariates=d.geo_covariates[idx2],
                row_ids=d.row_ids[idx2],
            )
        sub_seed = int(ss.generate_state(2)[1])
        try:
            result = odiwi_estimate(
                dstar_b, d_b, family, _with_seed(odiwi_config, sub_seed)
            )
        except OdiwiError:
            failed += 1
            continue
        estimates.append(float(result.final_beta[coef_index]))
    if failed > MAX_FAILURE_FRACTION * num_replicates:
        raise TooManyFailures(f"{failed}/{num_replicates} bootstrap replicates failed")
    estimates = np.asarray(estimates, dtype=float)
    return BootstrapResult(
        point_estimate=point_estimate,
        replicate_estimates=estimates,
        interval=percentile_interval(estimates, level),
        num_replicates=num_replicates,
        level=level,
        num_failed=failed,
        point_trajectory=point_trajectory,
    )


def _with_seed(config, seed):
    from dataclasses import replace

    return replace(config, seed=seed)
