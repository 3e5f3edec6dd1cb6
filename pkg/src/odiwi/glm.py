"""GLM families, IRLS fitting, model weights and design information matrices.

Two families are supported: Bernoulli with logit link and Gaussian with
identity link. Both use the canonical link, so the observed and expected
information coincide and IRLS is plain Newton-Raphson with step halving.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyDesign, NoConvergence, RankDeficient, Separation

BERNOULLI_LOGIT = "bernoulli_logit"
GAUSSIAN_IDENTITY = "gaussian_identity"

SCORE_TOL = 1e-8
BETA_CAP = 30.0
DEFAULT_MAX_ITER = 100


@dataclass(frozen=True)
class Family:
    """Outcome family: distribution, link, and dispersion."""

    kind: str = BERNOULLI_LOGIT
    dispersion: float = 1.0

    def __post_init__(self):
        if self.kind not in (BERNOULLI_LOGIT, GAUSSIAN_IDENTITY):
            raise ValueError(f"unknown family kind: {self.kind!r}")
        if self.dispersion <= 0:
            raise ValueError("dispersion must be positive")

    def mean(self, eta):
        if self.kind == BERNOULLI_LOGIT:
            return expit(eta)
        return eta

    def variance(self, mu):
        """Variance function V(mu); the conditional variance is dispersion * V(mu)."""
        if self.kind == BERNOULLI_LOGIT:
            return mu * (1.0 - mu)
        return np.ones_like(np.asarray(mu, dtype=float))


def bernoulli_logit():
    return Family(BERNOULLI_LOGIT, 1.0)


def gaussian_identity(dispersion=1.0):
    return Family(GAUSSIAN_IDENTITY, dispersion)


def expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(eta, dtype=float)))


@dataclass(frozen=True)
class FeatureMap:
    """Ordered feature construction: intercept, exposure block, covariate block.

    For design computations (which see only exposure points) the covariate
    block is either dropped or held at ``fixed_covariates``.
    """

    exposure_dim: int = 1
    covariate_dim: int = 0
    fixed_covariates: tuple = ()

    @property
    def dim(self):
        return 1 + self.exposure_dim + self.covariate_dim

    @property
    def terms(self):
        names = ["intercept"]
        names += [f"x{k + 1}" for k in range(self.exposure_dim)]
        names += [f"z{k + 1}" for k in range(self.covariate_dim)]
        return names

    def matrix(self, x, z=None):
        """Full design matrix (n, dim) from exposures x and covariates z."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = x.shape[0]
        cols = [np.ones((n, 1)), x]
        if self.covariate_dim:
            if z is None:
                raise ValueError("feature map expects covariates z")
            z = np.asarray(z, dtype=float).reshape(n, -1)
            cols.append(z)
        out = np.hstack(cols)
        if out.shape[1] != self.dim:
            raise ValueError(f"feature dimension {out.shape[1]} != declared {self.dim}")
        return out

    def exposure_features(self, points):
        """Features at exposure points only: intercept and exposure columns.

        Fixed covariates never appear as columns (they would be collinear
        with the intercept); they contribute an offset to the linear
        predictor via ``model_weights`` instead.
        """
        pts = np.asarray(points, dtype=float)
        pts = pts.reshape(-1, self.exposure_dim)
        return np.hstack([np.ones((pts.shape[0], 1)), pts])

    @property
    def design_dim(self):
        """Number of coefficients entering the design problem."""
        return 1 + self.exposure_dim


@dataclass(frozen=True)
class GlmFit:
    """Fitted GLM: coefficients, covariance, and convergence diagnostics."""

    beta: np.ndarray
    cov: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    family: Family
    score_norm: float = 0.0

    def linear_predictor(self, design_matrix, offset=None):
        eta = np.asarray(design_matrix, dtype=float) @ self.beta
        if offset is not None:
            eta = eta + offset
        return eta


def _log_likelihood(family, y, mu, phi):
    if family.kind == BERNOULLI_LOGIT:
        mu = np.clip(mu, 1e-300, 1.0 - 1e-16)
        return float(np.sum(y * np.log(mu) + (1.0 - y) * np.log1p(-mu)))
    n = y.size
    rss = float(np.sum((y - mu) ** 2))
    return float(-0.5 * n * np.log(2.0 * np.pi * phi) - 0.5 * rss / phi)


def fit_glm(design_matrix, y, family, offset=None, max_iter=DEFAULT_MAX_ITER):
    """Maximum-likelihood GLM fit via IRLS with step halving.

    Returns a GlmFit whose covariance is the inverse observed information.
    Raises RankDeficient for collinear columns, Separation when the logistic
    likelihood is unbounded, NoConvergence past the iteration budget.
    """
    X = np.asarray(design_matrix, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if n <= k:
        raise RankDeficient(f"n={n} rows cannot identify {k} coefficients")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficient("design matrix is rank deficient")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float).ravel()

    if family.kind == GAUSSIAN_IDENTITY:
        beta, *_ = np.linalg.lstsq(X, y - off, rcond=None)
        mu = X @ beta + off
        rss = float(np.sum((y - mu) ** 2))
        phi = rss / (n - k)
        if phi <= 0:
            phi = np.finfo(float).tiny
        xtx = X.T @ X
        cov = phi * np.linalg.inv(xtx)
        score = X.T @ (y - mu) / phi
        return GlmFit(
            beta=beta,
            cov=cov,
            loglik=_log_likelihood(family, y, mu, phi),
            iterations=1,
            converged=True,
            family=replace(family, dispersion=phi),
            score_norm=float(np.linalg.norm(score)),
        )

    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("bernoulli_logit outcomes must lie in {0, 1}")
    if y.min() == y.max():
        raise Separation("outcome is constant; the logistic MLE lies at the boundary")

    beta = np.zeros(k)
    mu = expit(X @ beta + off)
    ll = _log_likelihood(family, y, mu, 1.0)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = np.clip(mu * (1.0 - mu), 1e-12, None)
        score = X.T @ (y - mu)
        if np.linalg.norm(score) <= SCORE_TOL:
            converged = True
            it -= 1
            break
        hess = (X.T * w) @ X
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(hess + 1e-10 * np.eye(k), score)
        # step halving: never accept a likelihood decrease
        t = 1.0
        for _ in range(50):
            cand = beta + t * step
            mu_c = expit(X @ cand + off)
            ll_c = _log_likelihood(family, y, mu_c, 1.0)
            if ll_c >= ll - 1e-12:
                break
            t *= 0.5
        beta, mu, ll = cand, mu_c, ll_c
        if np.max(np.abs(beta)) > BETA_CAP:
            raise Separation(
                "coefficients exceeded cap {:.0f}; logistic likelihood looks unbounded".format(BETA_CAP)
            )
    score = X.T @ (y - mu)
    score_norm = float(np.linalg.norm(score))
    if not converged and score_norm <= SCORE_TOL:
        converged = True
    if not converged:
        raise NoConvergence(f"IRLS did not converge in {max_iter} iterations (score norm {score_norm:.3g})")
    w = np.clip(mu * (1.0 - mu), 1e-12, None)
    info = (X.T * w) @ X
    cov = np.linalg.inv(info)
    return GlmFit(
        beta=beta,
        cov=cov,
        loglik=ll,
        iterations=it,
        converged=converged,
        family=family,
        score_norm=score_norm,
    )


def model_weights(points, beta, family, feature_map):
    """Vector of per-point information multipliers u(x) over exposure points.

    When the feature map carries fixed covariates, beta may include their
    coefficients; the covariate contribution then enters the linear
    predictor as a constant offset.
    """
    F = feature_map.exposure_features(points)
    beta = np.asarray(beta, dtype=float).ravel()
    k = F.shape[1]
    fixed = np.asarray(feature_map.fixed_covariates, dtype=float)
    if fixed.size and beta.size == k + fixed.size:
        eta = F @ beta[:k] + float(fixed @ beta[k:])
    elif beta.size == k:
        eta = F @ beta
    else:
        raise ValueError(f"beta length {beta.size} != feature dimension {k}")
    mu = family.mean(eta)
    # canonical links: (dmu/deta)^2 / (phi V(mu)) simplifies to V(mu)/phi
    return family.variance(mu) / family.dispersion


def model_weight(x_point, beta, family, feature_map):
    """Information multiplier u(x) at a single exposure point."""
    pt = np.atleast_1d(np.asarray(x_point, dtype=float)).reshape(1, -1)
    return float(model_weights(pt, beta, family, feature_map)[0])


def information_matrix(design, beta, family, feature_map):
    """Design information matrix sum_j w_j u(x_j) Phi(x_j) Phi(x_j)'."""
    support = np.asarray(design.support, dtype=float)
    weights = np.asarray(design.weights, dtype=float)
    if support.size == 0 or weights.size == 0:
        raise EmptyDesign("design has no support points")
    if np.any(weights < 0):
        raise ValueError("design weights must be non-negative")
    if abs(float(weights.sum()) - 1.0) > 1e-12:
        raise ValueError("design weights must sum to 1")
    F = feature_map.exposure_features(support)
    u = model_weights(support, beta, family, feature_map)
    return (F * (weights * u)[:, None]).T @ F
