"""Locally optimal designs for a fitted GLM over a candidate exposure grid.

The solver is the classic multiplicative weight-update algorithm on a fixed
candidate grid, with D-optimality as the default criterion and the
Kiefer-Wolfowitz equivalence certificate as the stopping rule. A- and
E-criteria reuse the same skeleton with their directional derivatives but are
certified only for D.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateRange,
    EmptyAfterPrune,
    EmptyDesign,
    NoConvergence,
    SingularInformation,
)
from .glm import FeatureMap, model_weights

DEFAULT_MAX_ITER = 5000
DEFAULT_TOL = 1e-4
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Design:
    """Support points and probability weights of an approximate design."""

    support: np.ndarray
    weights: np.ndarray
    criterion: str = "D"
    certificate: float = float("nan")
    near_flat: bool = False

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if support.shape[0] != weights.size:
            raise ValueError("support and weights lengths differ")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        if weights.size == 0:
            raise EmptyDesign("design has no support points")
        if np.any(weights < -1e-15):
            raise ValueError("design weights must be non-negative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("design weights must sum to 1")

    @property
    def num_points(self):
        return self.weights.size

    def to_dict(self):
        return {
            "support": self.support.tolist(),
            "weights": self.weights.tolist(),
            "criterion": self.criterion,
            "certificate": float(self.certificate),
            "near_flat": bool(self.near_flat),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            support=np.asarray(d["support"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float),
            criterion=d.get("criterion", "D"),
            certificate=float(d.get("certificate", float("nan"))),
            near_flat=bool(d.get("near_flat", False)),
        )


@dataclass(frozen=True)
class CandidateGrid:
    """Finite candidate set of exposure points spanning the observed range."""

    points: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))

    @property
    def exposure_dim(self):
        return self.points.shape[1]


def build_candidate_grid(imputed_exposures, resolution=201):
    """Equally spaced grid over the per-dimension range of the exposures.

    For 2-d exposures, grid points outside the convex hull of the data are
    dropped so the design cannot propose unprecedented exposure combinations.
    """
    x = np.asarray(imputed_exposures, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n < 2:
        raise ValueError("need at least 2 exposure rows")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if p not in (1, 2):
        raise ValueError("design grids support exposure dimension 1 or 2")
    lo, hi = x.min(axis=0), x.max(axis=0)
    if np.any(hi - lo <= 0):
        raise DegenerateRange("exposures have zero spread in some dimension")
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(p)]
    if p == 1:
        pts = axes[0][:, None]
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
        pts = pts[_in_convex_hull(pts, x)]
    return CandidateGrid(points=pts, bounds=np.column_stack([lo, hi]))


def _in_convex_hull(points, data):
    from scipy.spatial import Delaunay, QhullError

    try:
        tri = Delaunay(data)
    except QhullError as exc:
        raise DegenerateRange(f"exposures do not span a 2-d region: {exc}") from exc
    scale = float(np.max(np.ptp(data, axis=0)))
    return tri.find_simplex(points, tol=1e-9 * scale) >= 0


def _inverse(matrix):
    if np.linalg.cond(matrix) > _COND_LIMIT:
        raise SingularInformation("information matrix is numerically singular")
    return np.linalg.inv(matrix)


def _directional_derivatives(F, u, w, criterion):
    """Per-candidate directional derivative d(x) and its optimal ceiling."""
    info = (F * (w * u)[:, None]).T @ F
    inv = _inverse(info)
    if criterion == "D":
        d = u * np.einsum("ij,jk,ik->i", F, inv, F)
        ceiling = F.shape[1]
    elif criterion == "A":
        inv2 = inv @ inv
        d = u * np.einsum("ij,jk,ik->i", F, inv2, F)
        ceiling = float(np.trace(inv))
    elif criterion == "E":
        eigval, eigvec = np.linalg.eigh(info)
        v = eigvec[:, 0]
        d = u * (F @ v) ** 2
        ceiling = float(eigval[0])
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return d, ceiling, info


def _criterion_value(info, criterion):
    if criterion == "D":
        sign, logdet = np.linalg.slogdet(info)
        return logdet if sign > 0 else -np.inf
    if criterion == "A":
        return -float(np.trace(_inverse(info)))
    return float(np.linalg.eigvalsh(info)[0])


def _grid_spacing(points):
    """Largest per-dimension nearest-neighbor spacing of the grid."""
    spacing = 0.0
    for col in points.T:
        vals = np.unique(col)
        if vals.size > 1:
            spacing = max(spacing, float(np.min(np.diff(vals))))
    return spacing


def _merge_clusters(points, weights, radius):
    """Greedy weight-ordered merging of points into weighted centroids."""
    order = np.argsort(weights)[::-1]
    centroids = []
    masses = []
    for idx in order:
        pt, wt = points[idx], weights[idx]
        for c in range(len(centroids)):
            if np.linalg.norm(pt - centroids[c]) <= radius:
                total = masses[c] + wt
                centroids[c] = (centroids[c] * masses[c] + pt * wt) / total
                masses[c] = total
                break
        else:
            centroids.append(np.array(pt, dtype=float))
            masses.append(float(wt))
    return np.asarray(centroids), np.asarray(masses)


def _chain_clusters(points, weights, radius):
    """Single-linkage clusters (chains of points within radius) -> centroids.

    Unlike the greedy merge, a hump of many adjacent grid points collapses
    into one weighted centroid even when its total extent exceeds the radius.
    """
    n = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    adjacent = np.sqrt(np.sum(diff * diff, axis=2)) <= radius
    labels = np.full(n, -1, dtype=int)
    num = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = num
        while stack:
            i = stack.pop()
            for j in np.nonzero(adjacent[i] & (labels < 0))[0]:
                labels[j] = num
                stack.append(j)
        num += 1
    centroids = np.empty((num, points.shape[1]))
    masses = np.empty(num)
    for c in range(num):
        mask = labels == c
        masses[c] = weights[mask].sum()
        centroids[c] = weights[mask] @ points[mask] / masses[c]
    return centroids, masses


def _restricted_weights(support, beta, family, fm, criterion, iters=200):
    """Optimal weights on a small fixed support by multiplicative updates."""
    F = fm.exposure_features(support)
    u = model_weights(support, beta, family, fm)
    k = F.shape[1]
    w = np.full(support.shape[0], 1.0 / support.shape[0])
    for _ in range(iters):
        d, _, _ = _directional_derivatives(F, u, w, criterion)
        w = w * (d / k)
        w /= w.sum()
    return w


def _polish_support(support, beta, family, fm, lo, hi, window, rounds=4):
    """Coordinate-wise exchange: move each support point to the nearby
    maximizer of the sensitivity function, re-optimizing weights in between."""
    from scipy.optimize import minimize_scalar

    support = np.array(support, dtype=float)
    for _ in range(rounds):
        w = _restricted_weights(support, beta, family, fm, "D")
        probe = Design(support=support, weights=w)
        for i in range(support.shape[0]):
            for dim in range(support.shape[1]):
                def negative_d(v, i=i, dim=dim):
                    x = support[i].copy()
                    x[dim] = v
                    return -sensitivity(x[None, :], probe, beta, family, feature_map=fm)[0]

                res = minimize_scalar(
                    negative_d,
                    bounds=(
                        max(lo[dim], support[i, dim] - window),
                        min(hi[dim], support[i, dim] + window),
                    ),
                    method="bounded",
                    options={"xatol": 1e-10},
                )
                support[i, dim] = res.x
    return support, _restricted_weights(support, beta, family, fm, "D")


def _exclusion_threshold(d_max, k):
    """Harman-Pronzato bound: candidates with d below it cannot support the optimum."""
    eps = d_max / k - 1.0
    if eps <= 0:
        return -np.inf
    return k * (1.0 + eps / 2.0 - np.sqrt(eps * (4.0 + eps - 4.0 / k)) / 2.0)


def solve_optimal_design(
    grid,
    beta,
    family,
    criterion="D",
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    feature_map=None,
    weight_floor=1e-10,
    refine="centroid",
    check_monotone=False,
):
    """Optimal design weights over the candidate grid by multiplicative updates.

    For the D-criterion the result carries the equivalence-theorem certificate
    max_x d(x) <= dim + tol over the full grid. Non-support candidates are
    excluded with the Harman-Pronzato bound as iterations proceed. With
    refine="centroid" (the default) weight humps spread over adjacent grid
    points may be collapsed to their weighted centroids once the collapsed
    design itself certifies; refine="off" keeps the support strictly on the
    grid. A and E use the same update skeleton with exponent 1/2, stop early
    when the relative directional-derivative gap closes, and otherwise return
    the best-valued iterate seen (no certificate; the E update can cycle when
    the smallest eigenvalue is nearly repeated).
    """
    pts = grid.points
    m, p = pts.shape
    fm = feature_map if feature_map is not None else FeatureMap(exposure_dim=p)
    beta = np.asarray(beta, dtype=float).ravel()
    F_full = fm.exposure_features(pts)
    k = F_full.shape[1]
    u_full = model_weights(pts, beta, family, fm)  # validates the beta length

    active = np.arange(m)
    F, u = F_full, u_full
    w = np.full(m, 1.0 / m)
    d, _, info = _directional_derivatives(F, u, w, criterion)
    if not np.isfinite(_criterion_value(info, criterion)) or np.linalg.cond(info) > _COND_LIMIT:
        raise SingularInformation("uniform grid design cannot identify the coefficients")
    near_flat = float(d.max() - d.min()) < tol

    merge_radius = 2.5 * _grid_spacing(pts)
    power = 1.0 if criterion == "D" else 0.5
    prev_value = _criterion_value(info, criterion)
    best_value, best_w, best_active = prev_value, w.copy(), active

    def finish(support, weights):
        weights = weights / weights.sum()
        cert = float("nan")
        if criterion == "D":
            probe = Design(support=support, weights=weights, criterion="D")
            eval_at = np.vstack([pts, probe.support])
            cert = float(
                np.max(sensitivity(eval_at, probe, beta, family, feature_map=fm))
            )
        return Design(
            support=support,
            weights=weights,
            criterion=criterion,
            certificate=cert,
            near_flat=near_flat,
        )

    for it in range(1, max_iter + 1):
        if criterion == "D":
            if float(d.max()) - k <= tol:
                keep = w > weight_floor
                return finish(pts[active][keep], w[keep])
            if it % 25 == 0:
                # exclusion: provably non-support candidates leave the active set
                thr = _exclusion_threshold(float(d.max()), k)
                keep = d >= thr
                if keep.sum() < active.size and keep.sum() >= k:
                    active = active[keep]
                    F, u, w = F[keep], u[keep], w[keep] / w[keep].sum()
                    d, _, info = _directional_derivatives(F, u, w, criterion)
                if refine == "centroid":
                    sel = w > 1e-3 * float(w.max())
                    centers, masses = _chain_clusters(
                        pts[active][sel], w[sel], merge_radius
                    )
                    try:
                        probe = Design(support=centers, weights=masses / masses.sum())
                        eval_at = np.vstack([pts, probe.support])
                        d_probe = sensitivity(eval_at, probe, beta, family, feature_map=fm)
                        gap = float(np.max(d_probe)) - k
                        if gap <= tol:
                            return finish(centers, masses)
                        if gap <= 100.0 * tol:
                            # close: polish support by local exchange steps
                            lo, hi = pts.min(axis=0), pts.max(axis=0)
                            window = max(5.0 * _grid_spacing(pts), 2.0 * merge_radius)
                            polished, w_pol = _polish_support(
                                centers, beta, family, fm, lo, hi, window
                            )
                            probe = Design(support=polished, weights=w_pol)
                            eval_at = np.vstack([pts, polished])
                            d_probe = sensitivity(
                                eval_at, probe, beta, family, feature_map=fm
                            )
                            if float(np.max(d_probe)) - k <= tol:
                                return finish(polished, w_pol)
                    except SingularInformation:
                        pass  # collapsed support cannot identify beta yet
            w = w * (d / k)
        else:
            avg = float(np.dot(w, d))
            if float(d.max()) - avg <= tol * max(abs(avg), 1e-12):
                keep = w > weight_floor
                return finish(pts[active][keep], w[keep])
            if it % 25 == 0:
                value = _criterion_value(info, criterion)
                if value > best_value:
                    best_value, best_w, best_active = value, w.copy(), active
            w = w * (d / avg) ** power
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        d, _, info = _directional_derivatives(F, u, w, criterion)
        if check_monotone:
            value = _criterion_value(info, criterion)
            assert value >= prev_value - 1e-9, "criterion decreased across an update"
            prev_value = value
    if criterion != "D":
        keep = best_w > weight_floor
        return finish(pts[best_active][keep], best_w[keep])
    raise NoConvergence(f"design solver did not certify within {max_iter} iterations")


def sensitivity(x, design, beta, family, feature_map=None):
    """Standardized variance d(x) = u(x) Phi(x)' I(design)^-1 Phi(x)."""
    from .glm import information_matrix

    p = design.support.shape[1]
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 0 or (pts.ndim == 1 and p > 1)
    pts = np.atleast_1d(pts)
    if pts.ndim == 1:
        pts = pts[:, None] if p == 1 else pts[None, :]
    fm = feature_map if feature_map is not None else FeatureMap(exposure_dim=p)
    info = information_matrix(design, beta, family, fm)
    inv = _inverse(info)
    F = fm.exposure_features(pts)
    u = model_weights(pts, beta, family, fm)
    d = u * np.einsum("ij,jk,ik->i", F, inv, F)
    return float(d[0]) if scalar else d


def prune_design(design, merge_radius, min_weight, max_support=None):
    """Merge nearby support points, drop negligible weights, renormalize.

    Points within merge_radius of a heavier cluster are absorbed at the
    weight-weighted centroid. If max_support is given, only the heaviest
    clusters are kept. Idempotent on already-pruned designs.
    """
    centroids, masses = _merge_clusters(design.support, design.weights, merge_radius)
    keep = masses >= min_weight
    if not np.any(keep):
        raise EmptyAfterPrune("all design weights fell below the pruning threshold")
    centroids, masses = centroids[keep], masses[keep]
    if max_support is not None and masses.size > max_support:
        heaviest = np.argsort(masses)[::-1][:max_support]
        centroids, masses = centroids[heaviest], masses[heaviest]
    masses = masses / masses.sum()
    order = np.lexsort(centroids.T[::-1])
    return Design(
        support=centroids[order],
        weights=masses[order],
        criterion=design.criterion,
        certificate=design.certificate,
        near_flat=design.near_flat,
    )
