"""Censored maximum likelihood over HV-car pairs.

Each pair contributes either the first-passage density at its lane-change
time (joint with survival of the opposite direction) or, when censored, the
survival probability of every available direction.  Directions without an
adjacent lane carry no passage probability and contribute a factor of one.

The likelihood supports two equivalent conventions for the lane-change
factor: ``density`` uses g(t_max) directly, ``mass`` uses g(t_max) * dt.
They differ by the parameter-independent constant n_lc * ln(dt), so fitted
parameters do not depend on the choice.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from . import ddm
from .ddm import DdmParams
from .trajectories import TrajectoryPair, initial_headway, outcome_direction

#: floor applied to every probability factor before taking its log
PROB_FLOOR = 1e-12

CONVENTIONS = ("density", "mass")


def _n_threads() -> int:
    try:
        return max(int(os.environ.get("DRIFTLANE_THREADS", "1")), 1)
    except ValueError:
        return 1


@dataclass
class PreparedPair:
    """Arrays extracted once from a pair for repeated likelihood evaluation."""

    h0: float
    lc_direction: int                 # -1/+1, or 0 when censored
    directions: dict                  # d -> (g_f, atan_dv, delta_g) arrays

    @classmethod
    def from_pair(cls, pair: TrajectoryPair) -> "PreparedPair":
        dirs = {}
        for d in pair.lanes_available:
            g_f = np.array([s.neighbors[d].g_f for s in pair.steps])
            atan_dv = np.arctan(
                np.array([s.neighbors[d].v_adj - s.v_hv for s in pair.steps]))
            delta = np.array([float(s.delta_g[d]) for s in pair.steps])
            dirs[d] = (g_f, atan_dv, delta)
        return cls(h0=initial_headway(pair),
                   lc_direction=outcome_direction(pair.outcome),
                   directions=dirs)


def prepare_pairs(pairs) -> list:
    return [p if isinstance(p, PreparedPair) else PreparedPair.from_pair(p)
            for p in pairs]


def _direction_tail(prep: PreparedPair, d: int, p: DdmParams, substeps: int):
    """(g_last, F_last) of the first-passage solve for one direction."""
    g_f, atan_dv, delta = prep.directions[d]
    mu = p.beta0 + p.beta1 * np.arctan(g_f - p.g_f0) \
        + p.beta2 * atan_dv + p.beta3 * delta
    res = ddm.first_passage_mu(
        p.evidence_base - p.alpha * prep.h0, mu, p.sigma, p.threshold, p.dt,
        substeps=substeps)
    return float(res.g[-1]), float(res.F[-1])


def _prepared_ll(prep: PreparedPair, p: DdmParams, convention: str,
                 substeps: int) -> float:
    tails = {d: _direction_tail(prep, d, p, substeps)
             for d in sorted(prep.directions)}
    ll = 0.0
    if prep.lc_direction != 0:
        d = prep.lc_direction
        if d in tails:
            g_last = tails[d][0]
            lc_factor = g_last if convention == "density" else g_last * p.dt
        else:
            lc_factor = 0.0  # LC into a direction the model deems unavailable
        ll += math.log(max(lc_factor, PROB_FLOOR))
        other = -d
        if other in tails:
            ll += math.log(max(1.0 - tails[other][1], PROB_FLOOR))
    else:
        for d, (_, f_last) in tails.items():
            ll += math.log(max(1.0 - f_last, PROB_FLOOR))
    return ll


def pair_log_likelihood(pair, p: DdmParams, convention: str = "density",
                        substeps: int = 1) -> float:
    """Log-likelihood contribution of one pair."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    prep = pair if isinstance(pair, PreparedPair) else PreparedPair.from_pair(pair)
    return _prepared_ll(prep, p, convention, substeps)


def total_log_likelihood(pairs, p: DdmParams, convention: str = "density",
                         substeps: int = 1) -> float:
    """Sum of pair log-likelihoods, reduced in canonical (input) order.

    Per-pair terms may be evaluated on multiple threads (capped by the
    DRIFTLANE_THREADS environment variable); the reduction is an exact
    ``math.fsum`` over the canonical order either way, so the result is
    bit-stable across schedules.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if not all(np.isfinite(p.free_vector())):
        raise ValueError(f"non-finite parameter vector: {p.free_vector()}")
    prepared = prepare_pairs(pairs)
    threads = _n_threads()
    if threads > 1 and len(prepared) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            terms = list(pool.map(
                lambda pr: _prepared_ll(pr, p, convention, substeps), prepared))
    else:
        terms = [_prepared_ll(pr, p, convention, substeps) for pr in prepared]
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass
class FitOptions:
    gtol: float = 1e-4
    max_iter: int = 200
    convention: str = "density"
    substeps: int = 1
    compute_se: bool = True
    fd_rel_step: float = 1e-4
    fd_abs_floor: float = 1e-6


@dataclass
class FitResult:
    params: DdmParams
    log_likelihood: float
    std_errors: dict = field(default_factory=dict)
    t_scores: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)
    convergence: str = "converged"
    n_pairs: int = 0
    n_lc: int = 0
    n_iter: int = 0
    convention: str = "density"
    information_flag: str = ""

    def to_dict(self) -> dict:
        rows = {}
        for name in DdmParams.FREE_NAMES:
            rows[name] = {
                "mean": getattr(self.params, name),
                "std_error": self.std_errors.get(name, float("nan")),
                "t_score": self.t_scores.get(name, float("nan")),
                "p_value": self.p_values.get(name, float("nan")),
            }
        return {
            "parameters": rows,
            "sample_size": self.n_pairs,
            "n_lc": self.n_lc,
            "log_likelihood": self.log_likelihood,
            "convention": self.convention,
            "convergence": self.convergence,
            "n_iter": self.n_iter,
            "information_flag": self.information_flag,
            "fixed": {"threshold": self.params.threshold,
                      "evidence_base": self.params.evidence_base,
                      "dt": self.params.dt},
        }


def _fd_steps(x: np.ndarray, rel: float, floor: float) -> np.ndarray:
    return np.maximum(np.abs(x) * rel, floor)


def _central_gradient(fun, x: np.ndarray, rel: float, floor: float) -> np.ndarray:
    h = _fd_steps(x, rel, floor)
    grad = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (fun(x + e) - fun(x - e)) / (2.0 * h[i])
    return grad


def fit(pairs, p0: DdmParams, options: FitOptions | None = None) -> FitResult:
    """Quasi-Newton maximization of the censored log-likelihood.

    Free parameters are (alpha, beta0..beta3, g_f0, sigma); sigma is
    optimized on a log scale to keep it positive.  Gradients are central
    finite differences of the log-likelihood.  Deterministic given the
    starting point and options.
    """
    options = options or FitOptions()
    if len(pairs) == 0:
        raise ValueError("cannot fit an empty pair set")
    prepared = prepare_pairs(pairs)
    n_lc = sum(1 for pr in prepared if pr.lc_direction != 0)

    sigma_idx = DdmParams.FREE_NAMES.index("sigma")

    def vec_to_params(x: np.ndarray) -> DdmParams:
        free = x.copy()
        free[sigma_idx] = math.exp(x[sigma_idx])
        return p0.replace_free(free)

    def negll(x: np.ndarray) -> float:
        return -total_log_likelihood(prepared, vec_to_params(x),
                                     convention=options.convention,
                                     substeps=options.substeps)

    x0 = p0.free_vector()
    if not np.all(np.isfinite(x0)) or p0.sigma <= 0:
        raise ValueError(f"invalid starting point: {x0}")
    x0[sigma_idx] = math.log(p0.sigma)
    f0 = negll(x0)
    if not np.isfinite(f0):
        raise ValueError(
            f"log-likelihood is not finite at the starting point "
            f"(LL={-f0}); check the pair data and starting parameters")

    res = minimize(
        negll, x0, method="BFGS",
        jac=lambda x: _central_gradient(negll, x, options.fd_rel_step,
                                        options.fd_abs_floor),
        options={"gtol": options.gtol, "maxiter": options.max_iter},
    )
    convergence = {0: "converged", 1: "max_iter"}.get(res.status,
                                                      "line_search_failure")
    p_hat = vec_to_params(res.x)
    result = FitResult(
        params=p_hat, log_likelihood=float(-res.fun),
        convergence=convergence, n_pairs=len(prepared), n_lc=n_lc,
        n_iter=int(res.nit), convention=options.convention,
    )
    if options.compute_se:
        se = standard_errors(prepared, p_hat, convention=options.convention,
                             substeps=options.substeps,
                             fd_rel_step=options.fd_rel_step,
                             fd_abs_floor=options.fd_abs_floor)
        result.std_errors = se["std_errors"]
        result.t_scores = se["t_scores"]
        result.p_values = se["p_values"]
        result.information_flag = se["flag"]
    return result


def standard_errors(pairs, p_hat: DdmParams, convention: str = "density",
                    substeps: int = 1, fd_rel_step: float = 1e-4,
                    fd_abs_floor: float = 1e-6) -> dict:
    """Observed-information standard errors, t-scores and p-values.

    The observed information is the negative Hessian of the log-likelihood
    at the estimate (natural parameter space, sigma included untransformed),
    by central finite differences.  If the information matrix is not
    positive definite the failure is flagged and only the parameters whose
    diagonal information is positive get a (fallback, diagonal-only)
    standard error; nothing is fabricated for the rest.
    """
    prepared = prepare_pairs(pairs)
    names = DdmParams.FREE_NAMES
    x = p_hat.free_vector()
    k = len(x)

    def ll(vec: np.ndarray) -> float:
        return total_log_likelihood(prepared, p_hat.replace_free(vec),
                                    convention=convention, substeps=substeps)

    h = _fd_steps(x, fd_rel_step, fd_abs_floor)
    H = np.empty((k, k))
    f0 = ll(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (ll(x + ei) - 2.0 * f0 + ll(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                ll(x + ei + ej) - ll(x + ei - ej)
                - ll(x - ei + ej) + ll(x - ei - ej)
            ) / (4.0 * h[i] * h[j])

    info = -H
    flag = ""
    se = np.full(k, np.nan)
    try:
        eigvals = np.linalg.eigvalsh(info)
        if np.all(eigvals > 0):
            se = np.sqrt(np.diag(np.linalg.inv(info)))
        else:
            flag = "information_not_positive_definite"
            diag = np.diag(info)
            se[diag > 0] = 1.0 / np.sqrt(diag[diag > 0])
    except np.linalg.LinAlgError:
        flag = "information_inversion_failed"

    with np.errstate(divide="ignore", invalid="ignore"):
        t = x / se
    p_values = 2.0 * norm.sf(np.abs(t))
    return {
        "std_errors": dict(zip(names, (float(v) for v in se))),
        "t_scores": dict(zip(names, (float(v) for v in t))),
        "p_values": dict(zip(names, (float(v) for v in p_values))),
        "flag": flag,
    }
