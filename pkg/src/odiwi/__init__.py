"""Two-stage exposure-effect estimation with optimal-design importance weighting."""

from .adapt import (
    DensityEstimate,
    ImportanceWeights,
    KernelSpec,
    design_density,
    importance_weights,
    kde_fit,
    uniform_weights,
)
from .bootstrap import BootstrapResult, bootstrap_ci
from .design import (
    CandidateGrid,
    Design,
    build_candidate_grid,
    prune_design,
    sensitivity,
    solve_optimal_design,
)
from .estimator import (
    IterationRecord,
    OdiwiConfig,
    OdiwiResult,
    SecondStageData,
    aggregate_inits,
    momentum_update,
    naive_estimate,
    odiwi_estimate,
    trajectory_rows,
)
from .glm import (
    Family,
    FeatureMap,
    GlmFit,
    bernoulli_logit,
    fit_glm,
    gaussian_identity,
    information_matrix,
    model_weight,
    model_weights,
)
from .sim import (
    MetricsRow,
    SimConfig,
    draw_truth,
    gen_first_stage,
    gen_second_stage,
    run_experiment,
    summarize,
)
from .stage1 import (
    FirstStageData,
    LinearPredictor,
    fit_weighted_linear,
    predict_exposure,
)

__version__ = "0.1.0"
