"""The iterative optimal-design importance-weighted (ODIWI) estimator.

Each cycle: fit the second-stage GLM on current imputed exposures, compute a
D-optimal design at the momentum-smoothed coefficients, smooth the design
into a target density, reweight the first-stage training points by the
target/source density ratio, and refit the exposure predictor. The naive
estimator is the zero-iteration special case with uniform weights.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import adapt, design as design_mod, glm, stage1 as stage1_mod

UNIFORM_INIT = "uniform"
DIRICHLET_INIT = "dirichlet_random"
AGG_AFTER_FIRST = "after_first_iteration"
AGG_AFTER_LAST = "after_last_iteration"


@dataclass(frozen=True)
class SecondStageData:
    """Outcome sample: health outcomes, personal and geographic covariates."""

    outcomes: np.ndarray
    covariates: np.ndarray
    geo_covariates: np.ndarray
    imputed_exposures: np.ndarray = None
    row_ids: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.outcomes, dtype=float).ravel()
        n = y.size
        z = self.covariates
        z = np.zeros((n, 0)) if z is None else np.asarray(z, dtype=float).reshape(n, -1)
        r = np.asarray(self.geo_covariates, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        if r.shape[0] != n:
            raise ValueError("outcomes and geographic covariates row counts differ")
        if np.any(~np.isfinite(z)) or np.any(~np.isfinite(r)):
            raise ValueError("second-stage covariates contain non-finite values")
        ids = self.row_ids
        ids = np.arange(n) if ids is None else np.asarray(ids)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "covariates", z)
        object.__setattr__(self, "geo_covariates", r)
        object.__setattr__(self, "row_ids", ids)

    @property
    def n(self):
        return self.outcomes.size

    @property
    def covariate_dim(self):
        return self.covariates.shape[1]

    def with_exposures(self, x_hat):
        return SecondStageData(
            outcomes=self.outcomes,
            covariates=self.covariates,
            geo_covariates=self.geo_covariates,
            imputed_exposures=np.asarray(x_hat, dtype=float).ravel(),
            row_ids=self.row_ids,
        )


@dataclass(frozen=True)
class OdiwiConfig:
    """Tuning knobs of the iterative estimator."""

    iterations: int = 10
    momentum: float = 0.5
    num_inits: int = 5
    init_mode: str = DIRICHLET_INIT
    aggregation: str = AGG_AFTER_LAST
    criterion: str = "D"
    kernel_shape: str = adapt.GAUSSIAN
    bandwidth_fraction: float = 0.10
    clip_quantile: float = adapt.DEFAULT_CLIP_QUANTILE
    seed: int = 0
    grid_resolution: int = 201
    merge_fraction: float = 0.01
    min_design_weight: float = 1e-4
    design_tol: float = 1e-4
    ridge: float = stage1_mod.DEFAULT_RIDGE
    fix_covariates_at_median: bool = False
    disable_adaptation: bool = False  # diagnostic mode: keep all weights at 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.num_inits < 1:
            raise ValueError("num_inits must be >= 1")
        if self.init_mode not in (UNIFORM_INIT, DIRICHLET_INIT):
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.aggregation not in (AGG_AFTER_FIRST, AGG_AFTER_LAST):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    """One trajectory entry: coefficients, smoothed coefficients, design."""

    iteration: int
    beta: np.ndarray
    beta_smoothed: np.ndarray
    design: design_mod.Design
    weight_summary: dict = None

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "beta": np.asarray(self.beta).tolist(),
            "beta_smoothed": np.asarray(self.beta_smoothed).tolist(),
            "design": self.design.to_dict() if self.design is not None else None,
            "weight_summary": self.weight_summary,
        }


@dataclass(frozen=True)
class OdiwiResult:
    """Full output: per-init trajectories, aggregate estimate, diagnostics."""

    trajectories: tuple
    init_labels: tuple
    final_beta: np.ndarray
    final_exposures: np.ndarray
    coef_names: tuple
    diagnostics: dict = field(default_factory=dict)
    config: OdiwiConfig = None

    @property
    def trajectory(self):
        return self.trajectories[0]

    def to_dict(self):
        return {
            "final_beta": np.asarray(self.final_beta).tolist(),
            "coef_names": list(self.coef_names),
            "final_exposures": np.asarray(self.final_exposures).tolist(),
            "trajectories": {
                str(label): [rec.to_dict() for rec in chain]
                for label, chain in zip(self.init_labels, self.trajectories)
            },
            "diagnostics": self.diagnostics,
            "config": self.config.to_dict() if self.config is not None else None,
        }


def momentum_update(prev, new, alpha):
    """Componentwise alpha * prev + (1 - alpha) * new."""
    prev = np.asarray(prev, dtype=float)
    new = np.asarray(new, dtype=float)
    if prev.shape != new.shape:
        raise ValueError("momentum operands have different shapes")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * prev + (1.0 - alpha) * new


def aggregate_inits(per_init_betas, mode=AGG_AFTER_LAST):
    """Componentwise mean of coefficient vectors across initializations."""
    betas = np.atleast_2d(np.asarray(per_init_betas, dtype=float))
    if mode not in (AGG_AFTER_FIRST, AGG_AFTER_LAST):
        raise ValueError(f"unknown aggregation {mode!r}")
    return betas.mean(axis=0)


def second_stage_feature_map(d):
    return glm.FeatureMap(exposure_dim=1, covariate_dim=d.covariate_dim)


def fit_second_stage(d, x_hat, family):
    fm = second_stage_feature_map(d)
    X = fm.matrix(np.asarray(x_hat, dtype=float), d.covariates if d.covariate_dim else None)
    return glm.fit_glm(X, d.outcomes, family)


def naive_estimate(dstar, d, family, ridge=stage1_mod.DEFAULT_RIDGE):
    """Standard two-stage pipeline: uniform-weight imputation, then one GLM fit."""
    predictor = stage1_mod.fit_weighted_linear(dstar, weights=None, ridge=ridge)
    x_hat = stage1_mod.predict_exposure(predictor, d.geo_covariates)
    return fit_second_stage(d, x_hat, family)


def _weight_summary(w):
    v = np.asarray(w, dtype=float)
    ess = float(v.sum() ** 2 / np.sum(v**2)) if np.any(v > 0) else 0.0
    return {
        "min": float(v.min()),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "ess": ess,
    }


def _design_inputs(config, d, beta_smoothed):
    """Feature map and coefficient slice used by the design problem."""
    if config.fix_covariates_at_median and d.covariate_dim:
        fixed = tuple(np.median(d.covariates, axis=0))
        fm = glm.FeatureMap(exposure_dim=1, fixed_covariates=fixed)
        beta_design = np.asarray(beta_smoothed, dtype=float)
    else:
        fm = glm.FeatureMap(exposure_dim=1)
        beta_design = np.asarray(beta_smoothed, dtype=float)[:2]
    return fm, beta_design


def _compute_design(config, family, d, x_hat, beta_smoothed):
    fm, beta_design = _design_inputs(config, d, beta_smoothed)
    grid = design_mod.build_candidate_grid(x_hat, resolution=config.grid_resolution)
    raw = design_mod.solve_optimal_design(
        grid,
        beta_design,
        family,
        criterion=config.criterion,
        tol=config.design_tol,
        feature_map=fm,
    )
    span = float(grid.bounds[0, 1] - grid.bounds[0, 0])
    k = fm.design_dim
    pruned = design_mod.prune_design(
        raw,
        merge_radius=config.merge_fraction * span,
        min_weight=config.min_design_weight,
        max_support=k * (k + 1) // 2,
    )
    return pruned, span


def _chain_step(config, family, dstar, d, p_source, x_hat, beta, beta_smoothed):
    """One design -> reweight -> refit cycle; returns the new chain state."""
    xi, span = _compute_design(config, family, d, x_hat, beta_smoothed)
    if config.disable_adaptation:
        weights = adapt.uniform_weights(dstar.n)
    else:
        kernel = adapt.KernelSpec(
            shape=config.kernel_shape, bandwidth=config.bandwidth_fraction * span
        )
        p_target = adapt.design_density(xi, kernel)
        weights = adapt.importance_weights(
            dstar.exposures,
            p_target,
            p_source,
            clip_quantile=config.clip_quantile,
        )
    predictor = stage1_mod.fit_weighted_linear(dstar, weights, ridge=config.ridge)
    x_next = stage1_mod.predict_exposure(predictor, d.geo_covariates)
    fit = fit_second_stage(d, x_next, family)
    beta_next = fit.beta
    beta_smoothed_next = momentum_update(beta_smoothed, beta_next, config.momentum)
    return xi, weights, x_next, beta_next, beta_smoothed_next


def _init_weights(config, n, rng):
    if config.init_mode == UNIFORM_INIT:
        return adapt.uniform_weights(n)
    values = rng.dirichlet(np.ones(n)) * n  # mean-one random weights
    return adapt.ImportanceWeights(values=values, clip_bound=None, normalized=True)


def _start_chain(config, family, dstar, d, omega0):
    predictor = stage1_mod.fit_weighted_linear(dstar, omega0, ridge=config.ridge)
    x_hat = stage1_mod.predict_exposure(predictor, d.geo_covariates)
    fit = fit_second_stage(d, x_hat, family)
    return x_hat, fit.beta, fit.beta.copy()


def odiwi_estimate(dstar, d, family, config=None):
    """Run the full iterative estimator over all configured initializations.

    The trajectory of each chain has iterations + 1 entries; entry 0 is the
    initialization fit (the naive estimate when the init is uniform). Entry
    l's design is the one computed from entry l's smoothed coefficients and
    drives the weights that produce entry l + 1.
    """
    config = config if config is not None else OdiwiConfig()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    p_source = adapt.kde_fit(
        dstar.exposures, adapt.KernelSpec(shape=config.kernel_shape)
    )
    coef_names = tuple(second_stage_feature_map(d).terms)
    L, M = config.iterations, config.num_inits

    init_weight_sets = [_init_weights(config, dstar.n, rng) for _ in range(M)]

    trajectories = []
    labels = []
    per_init_final = []
    final_exposures = None
    near_flat_seen = False

    if config.aggregation == AGG_AFTER_FIRST and M > 1:
        first_betas = []
        for m, omega0 in enumerate(init_weight_sets):
            x_hat, beta, beta_s = _start_chain(config, family, dstar, d, omega0)
            chain = []
            xi, weights, x_hat, beta1, beta_s1 = _chain_step(
                config, family, dstar, d, p_source, x_hat, beta, beta_s
            )
            near_flat_seen |= xi.near_flat
            chain.append(IterationRecord(0, beta, beta_s, xi, _weight_summary(weights.values)))
            chain.append(IterationRecord(1, beta1, beta_s1, None))
            trajectories.append(tuple(chain))
            labels.append(m)
            first_betas.append(beta1)
            if m == 0:
                serial_x = x_hat
        beta = aggregate_inits(first_betas, config.aggregation)
        beta_s = beta.copy()
        x_hat = serial_x
        chain = [IterationRecord(1, beta, beta_s, None)]
        for l in range(1, L):
            xi, weights, x_hat, beta, beta_s = _chain_step(
                config, family, dstar, d, p_source, x_hat, beta, beta_s
            )
            near_flat_seen |= xi.near_flat
            chain[-1] = IterationRecord(
                chain[-1].iteration, chain[-1].beta, chain[-1].beta_smoothed, xi,
                _weight_summary(weights.values),
            )
            chain.append(IterationRecord(l + 1, beta, beta_s, None))
        trajectories.append(tuple(chain))
        labels.append("serial")
        per_init_final = [beta]
        final_beta = beta
        final_exposures = x_hat
    else:
        for m, omega0 in enumerate(init_weight_sets):
            x_hat, beta, beta_s = _start_chain(config, family, dstar, d, omega0)
            chain = []
            for l in range(L):
                xi, weights, x_next, beta_next, beta_s_next = _chain_step(
                    config, family, dstar, d, p_source, x_hat, beta, beta_s
                )
                near_flat_seen |= xi.near_flat
                chain.append(
                    IterationRecord(l, beta, beta_s, xi, _weight_summary(weights.values))
                )
                x_hat, beta, beta_s = x_next, beta_next, beta_s_next
            chain.append(IterationRecord(L, beta, beta_s, None))
            trajectories.append(tuple(chain))
            labels.append(m)
            per_init_final.append(beta)
            if m == 0:
                final_exposures = x_hat
        final_beta = aggregate_inits(per_init_final, config.aggregation)

    diagnostics = {
        "near_flat_design": bool(near_flat_seen),
        "per_init_final": [np.asarray(b).tolist() for b in per_init_final],
        "certificates": [
            rec.design.certificate
            for chain in trajectories
            for rec in chain
            if rec.design is not None
        ],
    }
    return OdiwiResult(
        trajectories=tuple(trajectories),
        init_labels=tuple(labels),
        final_beta=np.asarray(final_beta, dtype=float),
        final_exposures=np.asarray(final_exposures, dtype=float),
        coef_names=coef_names,
        diagnostics=diagnostics,
        config=config,
    )


def trajectory_rows(result):
    """Long-format rows (iteration, init_id, coefficient, value) for CSV export."""
    rows = []
    for label, chain in zip(result.init_labels, result.trajectories):
        for rec in chain:
            for name, value in zip(result.coef_names, np.asarray(rec.beta)):
                rows.append((rec.iteration, label, name, float(value)))
    return rows
