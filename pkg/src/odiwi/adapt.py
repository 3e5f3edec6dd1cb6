"""Density estimation and importance weights under the prior-shift assumption.

The source density is a KDE of the first-stage exposures; the target density
smooths a discrete design into a kernel mixture. Importance weights are the
target/source density ratio at the training exposures, floored, optionally
clipped, and normalized to mean one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroWeights, DegenerateSample

GAUSSIAN = "gaussian"
UNIFORM = "uniform"
TRIANGLE = "triangle"

_SQRT_2PI = np.sqrt(2.0 * np.pi)

DEFAULT_CLIP_QUANTILE = 0.99
# source-density floor, as a fraction of the peak source density
FLOOR_FRACTION = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Kernel shape and bandwidth (half-width for the compact kernels)."""

    shape: str = GAUSSIAN
    bandwidth: float = None

    def __post_init__(self):
        if self.shape not in (GAUSSIAN, UNIFORM, TRIANGLE):
            raise ValueError(f"unknown kernel shape {self.shape!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


def _kernel_profile(shape, t):
    """Normalized 1-d kernel at standardized distance t (density per unit t)."""
    t = np.abs(t)
    if shape == GAUSSIAN:
        return np.exp(-0.5 * t * t) / _SQRT_2PI
    if shape == UNIFORM:
        return np.where(t <= 1.0, 0.5, 0.0)
    return np.where(t <= 1.0, 1.0 - t, 0.0)


@dataclass(frozen=True)
class DensityEstimate:
    """Kernel mixture density: KDE of samples or a smoothed design."""

    kind: str
    centers: np.ndarray
    mixture_weights: np.ndarray
    kernel_shape: str
    bandwidth: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        weights = np.asarray(self.mixture_weights, dtype=float).ravel()
        bw = np.broadcast_to(
            np.asarray(self.bandwidth, dtype=float).ravel(), (centers.shape[1],)
        ).copy()
        if np.any(bw <= 0):
            raise ValueError("bandwidths must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "mixture_weights", weights)
        object.__setattr__(self, "bandwidth", bw)

    @property
    def dim(self):
        return self.centers.shape[1]

    def evaluate(self, x):
        """Density values at query points (scalar, 1-d array for p=1, or (n,p))."""
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 0 or (pts.ndim == 1 and self.dim > 1)
        pts = np.atleast_1d(pts)
        if pts.ndim == 1:
            pts = pts[:, None] if self.dim == 1 else pts[None, :]
        t = (pts[:, None, :] - self.centers[None, :, :]) / self.bandwidth
        per_dim = _kernel_profile(self.kernel_shape, t) / self.bandwidth
        dens = np.prod(per_dim, axis=2) @ self.mixture_weights
        return float(dens[0]) if scalar else dens

    __call__ = evaluate


def silverman_bandwidth(samples):
    """Per-dimension rule-of-thumb bandwidth 1.06 * sd * m^(-1/5)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    sd = x.std(axis=0, ddof=1)
    return 1.06 * sd * x.shape[0] ** (-0.2)


def kde_fit(samples, kernel=None):
    """Kernel density estimate with Silverman auto-bandwidth by default."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    kernel = kernel if kernel is not None else KernelSpec()
    if kernel.bandwidth is not None:
        bw = np.full(x.shape[1], float(kernel.bandwidth))
    else:
        if m < 2:
            raise DegenerateSample("auto bandwidth needs at least 2 samples")
        bw = silverman_bandwidth(x)
        if np.any(bw <= 0):
            raise DegenerateSample("samples have zero spread in some dimension")
    return DensityEstimate(
        kind="kde",
        centers=x,
        mixture_weights=np.full(m, 1.0 / m),
        kernel_shape=kernel.shape,
        bandwidth=bw,
    )


def design_density(design, kernel):
    """Smooth a discrete design into a kernel mixture target density."""
    if kernel.bandwidth is None:
        raise ValueError("design_density requires an explicit bandwidth")
    return DensityEstimate(
        kind="design_mixture",
        centers=design.support,
        mixture_weights=design.weights,
        kernel_shape=kernel.shape,
        bandwidth=np.full(design.support.shape[1], float(kernel.bandwidth)),
    )


@dataclass(frozen=True)
class ImportanceWeights:
    """Non-negative training weights, mean one when normalized."""

    values: np.ndarray
    clip_bound: float = None
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())

    def __len__(self):
        return self.values.size


def uniform_weights(n):
    return ImportanceWeights(values=np.ones(n), clip_bound=None, normalized=True)


def importance_weights(
    source_exposures,
    p_target,
    p_source,
    clip_quantile=DEFAULT_CLIP_QUANTILE,
    floor=None,
):
    """Target/source density ratio at the training exposures.

    The source density is floored to avoid blow-ups in its tails, the raw
    ratios are clipped at the clip_quantile empirical quantile (None disables
    clipping), and the result is normalized to mean one.
    """
    x = np.asarray(source_exposures, dtype=float)
    ps = np.asarray(p_source.evaluate(x), dtype=float)
    pt = np.asarray(p_target.evaluate(x), dtype=float)
    if floor is None:
        peak = float(ps.max(initial=0.0))
        floor = FLOOR_FRACTION * peak if peak > 0 else np.finfo(float).tiny
    raw = pt / np.maximum(ps, floor)
    if not np.any(raw > 0):
        raise AllZeroWeights("target density places no mass on the source exposures")
    clip_bound = None
    if clip_quantile is not None:
        cap = float(np.quantile(raw, clip_quantile))
        if cap <= 0:
            cap = float(raw.max())  # nearly all mass in the upper tail; do not clip to zero
        raw = np.minimum(raw, cap)
        clip_bound = cap / raw.mean()  # bound on the normalized scale
    values = raw / raw.mean()
    return ImportanceWeights(values=values, clip_bound=clip_bound, normalized=True)
