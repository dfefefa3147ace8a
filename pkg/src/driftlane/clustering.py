"""Longitudinal feature extraction and intention clustering.

Each HV-car pair is summarized by five longitudinal features which are
projected to a scalar position; pairs are then split into two groups by an
exact one-dimensional 2-means.  The projection weights are chosen to
minimize the within-cluster sum of squares, and the cluster holding the
pairs that actually changed lanes is taken as the "intention" cluster.

Adjacent-lane quantities are deliberately excluded from the features: the
decision model uses them, and clustering on them would pre-select the very
signal the model is fitted to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .trajectories import TrajectoryPair, CENSORED

#: default multi-start grid bound for the weight search
WEIGHT_GRID_BOUND = 100.0
WEIGHT_GRID_POINTS = 5


@dataclass
class PairFeatures:
    """The five longitudinal features of one pair."""

    duration: float      # s
    mean_gap: float      # m
    std_gap: float       # m (population std over the pair's steps)
    mean_a_car: float    # m/s^2
    mean_a_hv: float     # m/s^2


@dataclass
class FeatureWeights:
    gamma1: float
    gamma2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma1, self.gamma2])


#: weights from the reference calibration
REFERENCE_WEIGHTS = FeatureWeights(gamma1=-23.62, gamma2=-4.27)


@dataclass
class ClusterResult:
    """Exact 1-D 2-means output. Cluster 1 has the smaller center."""

    assignments: np.ndarray     # 1 or 2 per input position
    centers: tuple              # (smaller, larger)
    within_sse: float
    weights: FeatureWeights | None = None

    def to_dict(self) -> dict:
        d = {
            "centers": list(self.centers),
            "within_sse": self.within_sse,
            "assignments": [int(a) for a in self.assignments],
        }
        if self.weights is not None:
            d["weights"] = {"gamma1": self.weights.gamma1,
                            "gamma2": self.weights.gamma2}
        return d


def pair_features(pair: TrajectoryPair) -> PairFeatures:
    if not pair.steps:
        raise ValueError("pair has no steps")
    g = np.array([s.g_hv for s in pair.steps])
    a_car = np.array([s.a_car for s in pair.steps])
    a_hv = np.array([s.a_hv for s in pair.steps])
    return PairFeatures(
        duration=pair.duration,
        mean_gap=float(g.mean()),
        std_gap=float(g.std()),
        mean_a_car=float(a_car.mean()),
        mean_a_hv=float(a_hv.mean()),
    )


def feature_position(f: PairFeatures, w: FeatureWeights) -> float:
    """Scalar projection of the five features."""
    if f.duration <= 0:
        raise ValueError("pair duration must be positive")
    return (f.mean_gap
            + w.gamma1 * (f.std_gap / f.duration)
            + w.gamma2 * (f.mean_a_car - f.mean_a_hv))


def kmeans_1d_2(positions) -> ClusterResult:
    """Exact global 2-means in one dimension.

    Sorts the values and scans every split of the sorted order; the optimal
    2-means partition is always an interval split, so this enumerates all
    candidates.  Ties go to the smaller split index.
    """
    x = np.asarray(positions, dtype=float)
    if x.ndim != 1 or len(x) < 2 or len(np.unique(x)) < 2:
        raise ValueError("degenerate clustering input")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(xs)
    cum = np.cumsum(xs)
    cum2 = np.cumsum(xs * xs)
    total = cum[-1]
    total2 = cum2[-1]
    m = np.arange(1, n)  # left cluster size
    sse_left = cum2[m - 1] - cum[m - 1] ** 2 / m
    sse_right = (total2 - cum2[m - 1]) - (total - cum[m - 1]) ** 2 / (n - m)
    sse = sse_left + sse_right
    best = int(np.argmin(sse))  # argmin returns the first (smallest split)
    split = best + 1
    c1 = float(cum[split - 1] / split)
    c2 = float((total - cum[split - 1]) / (n - split))
    assignments = np.empty(n, dtype=int)
    assignments[order[:split]] = 1
    assignments[order[split:]] = 2
    return ClusterResult(assignments=assignments, centers=(c1, c2),
                         within_sse=max(float(sse[best]), 0.0))


def _positions(features, w: FeatureWeights) -> np.ndarray:
    return np.array([feature_position(f, w) for f in features])


def _sse_objective(features):
    def obj(gammas):
        w = FeatureWeights(float(gammas[0]), float(gammas[1]))
        pos = _positions(features, w)
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"non-finite feature positions at weights {gammas}")
        if len(np.unique(pos)) < 2:
            return 0.0  # all positions coincide: zero within-cluster spread
        return kmeans_1d_2(pos).within_sse

    return obj


def optimize_weights(features, w0: FeatureWeights | None = None,
                     grid_bound: float = WEIGHT_GRID_BOUND,
                     grid_points: int = WEIGHT_GRID_POINTS):
    """Minimize the 2-means SSE over the projection weights.

    The objective is piecewise smooth (cluster assignments switch at split
    boundaries), so a derivative-free simplex search is run from ``w0`` and
    from a fixed coarse grid of starts; the best local minimum wins.

    Returns ``(weights, ClusterResult)`` with the clustering recomputed at
    the returned weights.
    """
    features = list(features)
    if len(features) < 2:
        raise ValueError("need at least two pairs to cluster")
    if w0 is None:
        w0 = FeatureWeights(0.0, 0.0)
    obj = _sse_objective(features)

    starts = [w0.as_array()]
    axis = np.linspace(-grid_bound, grid_bound, grid_points)
    for g1 in axis:
        for g2 in axis:
            starts.append(np.array([g1, g2]))

    best_x = w0.as_array()
    best_val = obj(best_x)
    for x0 in starts:
        res = minimize(obj, x0, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 2000})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val = float(res.fun)
            best_x = res.x
    w = FeatureWeights(float(best_x[0]), float(best_x[1]))
    result = kmeans_1d_2(_positions(features, w))
    result.weights = w
    return w, result


def weight_significance(features, w: FeatureWeights, rel_step: float = 1e-3):
    """Heuristic standard errors and t-scores for the projection weights.

    Mechanical nonlinear-least-squares style estimate from a numerical
    Hessian of the SSE objective at the optimum: cov = 2 * s^2 * H^-1 with
    s^2 = SSE / (n - 2).  The clustering objective has no sampling model
    behind it, so these numbers are diagnostics, not inference.
    """
    features = list(features)
    obj = _sse_objective(features)
    x = w.as_array()
    n = len(features)
    h = np.maximum(np.abs(x) * rel_step, 1e-4)
    H = np.empty((2, 2))
    f0 = obj(x)
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = h[i]
        H[i, i] = (obj(x + ei) - 2.0 * f0 + obj(x - ei)) / h[i] ** 2
        for j in range(i + 1, 2):
            ej = np.zeros(2)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                obj(x + ei + ej) - obj(x + ei - ej)
                - obj(x - ei + ej) + obj(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
    s2 = f0 / max(n - 2, 1)
    try:
        cov = 2.0 * s2 * np.linalg.inv(H)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(2, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = x / se
    return {"std_errors": se, "t_scores": t, "heuristic": True}


def select_intention_cluster(result: ClusterResult, outcomes):
    """Pick the cluster holding the majority of lane-changing pairs.

    ``outcomes`` aligns with the clustered positions (pair outcome strings
    or truthy LC flags).  Returns ``(cluster_id, member_indices,
    diagnostics)`` where diagnostics lists LC pairs assigned to the other
    cluster (ideally empty).
    """
    is_lc = np.array([
        bool(o) and o != CENSORED if isinstance(o, str) else bool(o)
        for o in outcomes
    ])
    if len(is_lc) != len(result.assignments):
        raise ValueError("outcomes must align with cluster assignments")
    if not is_lc.any():
        raise ValueError("cannot identify intention cluster: no LC pairs")
    counts = {c: int(np.sum(is_lc & (result.assignments == c))) for c in (1, 2)}
    cluster_id = 1 if counts[1] >= counts[2] else 2
    members = np.nonzero(result.assignments == cluster_id)[0]
    diagnostics = [int(i) for i in
                   np.nonzero(is_lc & (result.assignments != cluster_id))[0]]
    return cluster_id, members, diagnostics
