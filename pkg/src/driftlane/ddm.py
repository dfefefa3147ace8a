"""Evidence-accumulation (drift-diffusion) machinery.

The decision process is a Wiener process with environment-driven drift: the
evidence starts below a fixed threshold and a lane change fires at the first
threshold crossing.  The first-passage density on the 0.1 s data grid is
computed with a trapezoidal Volterra recursion built from the free-space
Gaussian transition density and its boundary kernel.

Numerical conventions (these matter; see the individual functions):

* ``drift_integral`` offers two quadrature rules.  The ``closed`` rule sums
  mu over both window endpoints.  The solver itself uses the ``left``
  (half-open) rule, which reproduces the mean of the Euler-discretized
  evidence process exactly and makes the boundary kernel vanish for
  constant drift, as it must for the recursion's leading term to equal the
  exact constant-drift first-passage density.
* The recursion output ``g`` is a density (1/s); per-step passage mass is
  ``g * dt`` and the cumulative probability is the running mass sum.
* Small negative densities produced by the quadrature are clamped to zero
  and the clamped mass is tracked as a numerical-health metric.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    _HAVE_NUMBA = False

from .trajectories import TrajectoryPair, initial_headway

#: fixed model constants; overridable only through an explicit audit flag
FIXED_THRESHOLD = 20.0
FIXED_EVIDENCE_BASE = 10.0
FIXED_DT = 0.1


@dataclass
class DdmParams:
    """Free parameters of the lane-change evidence model plus fixed constants."""

    alpha: float        # evidence lost per second of initial headway
    beta0: float        # base drift, 1/s
    beta1: float        # weight on arctan(g_f - g_f0)
    beta2: float        # weight on arctan(v_adj - v_hv)
    beta3: float        # weight on the gap-growth dummy
    g_f0: float         # neutral adjacent follow gap, m
    sigma: float        # diffusion scale, evidence/sqrt(s)
    threshold: float = FIXED_THRESHOLD
    evidence_base: float = FIXED_EVIDENCE_BASE
    dt: float = FIXED_DT

    def __post_init__(self):
        # sigma == 0 is allowed so the simulator can run deterministic
        # ramps; the passage-time recursion and the fit require sigma > 0
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.threshold <= self.evidence_base:
            raise ValueError("threshold must exceed the initial-evidence base")

    FREE_NAMES = ("alpha", "beta0", "beta1", "beta2", "beta3", "g_f0", "sigma")

    def free_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.FREE_NAMES])

    def replace_free(self, vec) -> "DdmParams":
        kw = dict(zip(self.FREE_NAMES, (float(v) for v in vec)))
        return DdmParams(threshold=self.threshold,
                         evidence_base=self.evidence_base, dt=self.dt, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DdmParams":
        return cls(**d)


#: reference calibration on TGSIM I-395 lane 3-5 trajectories
REFERENCE_PARAMS = DdmParams(
    alpha=0.3267, beta0=-0.2313, beta1=0.1824, beta2=0.0994,
    beta3=0.7376, g_f0=16.7484, sigma=1.9147,
)


def load_params(path, allow_override: bool = False) -> DdmParams:
    """Read a params JSON file.

    The fixed constants (threshold 20, evidence base 10, dt 0.1) must match
    their canonical values unless ``allow_override`` is set.
    """
    with open(path) as fh:
        d = json.load(fh)
    p = DdmParams.from_dict(d)
    if not allow_override:
        fixed = ((p.threshold, FIXED_THRESHOLD, "threshold"),
                 (p.evidence_base, FIXED_EVIDENCE_BASE, "evidence_base"),
                 (p.dt, FIXED_DT, "dt"))
        for got, want, name in fixed:
            if got != want:
                raise ValueError(
                    f"params file sets {name}={got}, expected {want} "
                    f"(pass the override flag to accept)")
    return p


def save_params(params: DdmParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params.to_dict(), fh, indent=1)
        fh.write("\n")


@dataclass
class EnvStep:
    """Environment driving the drift for one direction at one timestep."""

    g_f: float      # adjacent follow gap, m
    v_adj: float    # adjacent leader speed, m/s
    v_hv: float     # leading heavy vehicle speed, m/s
    delta_g: int    # 1 if the total adjacent gap grew since the last step


@dataclass
class FirstPassageResult:
    """First-passage density and cumulative probability on the data grid."""

    t_grid: np.ndarray
    g: np.ndarray               # density, 1/s
    F: np.ndarray               # cumulative passage probability
    clamped_mass: float = 0.0   # negative density mass clamped to zero
    overshoot: float = 0.0      # cumulative mass in excess of 1 before capping

    @property
    def total_probability(self) -> float:
        return float(self.F[-1])


# ---------------------------------------------------------------------------
# Elementary pieces
# ---------------------------------------------------------------------------

def initial_evidence(h0: float, p: DdmParams) -> float:
    """Starting evidence as a decreasing linear function of initial headway."""
    if h0 < 0:
        raise ValueError(f"initial headway must be non-negative, got {h0}")
    return p.evidence_base - p.alpha * h0


def drift_rate(env: EnvStep, p: DdmParams) -> float:
    """Instantaneous drift from the four environment variables."""
    return (p.beta0
            + p.beta1 * math.atan(env.g_f - p.g_f0)
            + p.beta2 * math.atan(env.v_adj - env.v_hv)
            + p.beta3 * env.delta_g)


def drift_rates(env_series, p: DdmParams) -> np.ndarray:
    """Vectorized drift over a series of EnvStep (or field arrays)."""
    g_f = np.array([e.g_f for e in env_series])
    dv = np.array([e.v_adj - e.v_hv for e in env_series])
    dg = np.array([float(e.delta_g) for e in env_series])
    return drift_rates_from_arrays(g_f, dv, dg, p)


def drift_rates_from_arrays(g_f, dv, delta_g, p: DdmParams) -> np.ndarray:
    return (p.beta0 + p.beta1 * np.arctan(g_f - p.g_f0)
            + p.beta2 * np.arctan(dv) + p.beta3 * delta_g)


def drift_integral(mu_series, j: int, i: int, dt: float, rule: str = "closed") -> float:
    """Discretized integral of the drift over the window [t_j, t_i].

    ``rule="closed"`` sums both endpoints: dt * sum(mu[j..i]).
    ``rule="left"`` is the half-open left rule dt * sum(mu[j..i-1]), which
    is what the passage-time solver uses internally (it matches the Euler
    process and is exact for constant drift).
    """
    n = len(mu_series)
    if not (0 <= j <= i < n):
        raise IndexError(f"window [{j}, {i}] out of range for series of length {n}")
    mu = np.asarray(mu_series, dtype=float)
    if rule == "closed":
        return float(dt * mu[j:i + 1].sum())
    if rule == "left":
        return float(dt * mu[j:i].sum())
    raise ValueError(f"unknown rule {rule!r}")


def transition_density(x: float, t: float, y: float, s_: float,
                       mu_series, p: DdmParams) -> float:
    """Free-space Gaussian density of evidence x at t given y at s_.

    Times must lie on the grid t_k = k * dt of ``mu_series``.  Uses the
    left-rule drift integral over [s_, t].
    """
    if t <= s_:
        raise ValueError(f"non-positive elapsed time: t={t} <= s={s_}")
    dt = p.dt
    j = int(round(s_ / dt))
    i = int(round(t / dt))
    integral = drift_integral(mu_series, j, i, dt, rule="left")
    tau = t - s_
    var = p.sigma ** 2 * tau
    d = x - y - integral
    return math.exp(-d * d / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def kernel(x_threshold: float, t: float, y: float, s_: float,
           mu_series, p: DdmParams) -> float:
    """Boundary kernel of the first-passage Volterra equation.

    For the constant threshold its time derivative is zero.  The sign is
    fixed so the leading recursion term -2*kernel is a positive density,
    which the constant-drift analytic oracle confirms.
    """
    if t <= s_:
        raise ValueError(f"non-positive elapsed time: t={t} <= s={s_}")
    dt = p.dt
    j = int(round(s_ / dt))
    i = int(round(t / dt))
    integral = drift_integral(mu_series, j, i, dt, rule="left")
    f = transition_density(x_threshold, t, y, s_, mu_series, p)
    mu_t = float(mu_series[i])
    tau = t - s_
    return 0.5 * f * (-mu_t - (x_threshold - y - integral) / tau)


# ---------------------------------------------------------------------------
# First-passage recursion
# ---------------------------------------------------------------------------

def _fp_density_py(a0, mu, sigma, threshold, dt):
    n = len(mu)
    g = np.zeros(n)
    clamped = 0.0
    c = np.concatenate(([0.0], np.cumsum(mu)))  # c[i] = sum mu[0..i-1]
    s2 = sigma * sigma
    two_pi = 2.0 * math.pi
    for i in range(1, n):
        ti = i * dt
        d0 = threshold - a0 - dt * c[i]
        f0 = math.exp(-d0 * d0 / (2.0 * s2 * ti)) / math.sqrt(two_pi * s2 * ti)
        acc = f0 * (mu[i] + d0 / ti)  # = -2 * kernel(threshold, t_i | a0, t_0)
        if i >= 2:
            k = np.arange(1, i)
            integ = dt * (c[i] - c[k])
            tau = (i - k) * dt
            fk = np.exp(-integ * integ / (2.0 * s2 * tau)) / np.sqrt(two_pi * s2 * tau)
            acc += dt * float(np.dot(g[1:i], fk * (integ / tau - mu[i])))
        if acc < 0.0:
            clamped += -acc * dt
            g[i] = 0.0
        else:
            g[i] = acc
    return g, clamped


if _HAVE_NUMBA:

    @njit(cache=True, nogil=True, fastmath=True)
    def _fp_density_nb(a0, mu, sigma, threshold, dt):  # pragma: no cover - jitted
        n = mu.shape[0]
        g = np.zeros(n)
        c = np.zeros(n + 1)
        for i in range(n):
            c[i + 1] = c[i] + mu[i]
        # per-lag tables: tau = lag * dt
        inv_tau = np.empty(n)
        inv_2s2tau = np.empty(n)
        norm_tau = np.empty(n)
        s2 = sigma * sigma
        two_pi = 2.0 * math.pi
        for lag in range(1, n):
            tau = lag * dt
            inv_tau[lag] = 1.0 / tau
            inv_2s2tau[lag] = 1.0 / (2.0 * s2 * tau)
            norm_tau[lag] = 1.0 / math.sqrt(two_pi * s2 * tau)
        clamped = 0.0
        for i in range(1, n):
            d0 = threshold - a0 - dt * c[i]
            f0 = math.exp(-d0 * d0 * inv_2s2tau[i]) * norm_tau[i]
            acc = f0 * (mu[i] + d0 * inv_tau[i])
            ci = c[i]
            mi = mu[i]
            for k in range(1, i):
                gk = g[k]
                if gk == 0.0:
                    continue
                integ = dt * (ci - c[k])
                lag = i - k
                fk = math.exp(-integ * integ * inv_2s2tau[lag]) * norm_tau[lag]
                acc += dt * gk * (integ * inv_tau[lag] - mi) * fk
            if acc < 0.0:
                clamped += -acc * dt
                g[i] = 0.0
            else:
                g[i] = acc
        return g, clamped

    _fp_density = _fp_density_nb
else:
    _fp_density = _fp_density_py


def first_passage_mu(a0: float, mu, sigma: float, threshold: float, dt: float,
                     substeps: int = 1) -> FirstPassageResult:
    """First-passage solve from an explicit drift series.

    ``mu`` holds the drift at grid points t_i = i * dt.  ``substeps``
    refines the internal grid with a zero-order hold of the drift; the
    returned series stays on the data grid.  Refinement is only needed for
    very fast passages (strong drift, small barrier gap).
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    if mu.ndim != 1 or len(mu) == 0:
        raise ValueError("mu must be a non-empty 1-D series")
    if sigma <= 0:
        raise ValueError(f"the passage-time recursion needs sigma > 0, got {sigma}")
    if a0 >= threshold:
        raise ValueError("process starts absorbed (initial evidence >= threshold)")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if substeps > 1:
        mu_f = np.repeat(mu, substeps)
        dt_f = dt / substeps
    else:
        mu_f = mu
        dt_f = dt
    g_f, clamped = _fp_density(a0, mu_f, float(sigma), float(threshold), dt_f)
    F_f = np.cumsum(g_f) * dt_f
    g = g_f[::substeps].copy()
    F = F_f[::substeps].copy()
    overshoot = max(float(F[-1]) - 1.0, 0.0)
    np.minimum(F, 1.0, out=F)
    t_grid = np.arange(len(mu)) * dt
    return FirstPassageResult(t_grid=t_grid, g=g, F=F,
                              clamped_mass=float(clamped), overshoot=overshoot)


def first_passage(a0: float, env_series, p: DdmParams,
                  substeps: int = 1) -> FirstPassageResult:
    """First-passage solve for one lateral direction's environment series."""
    if len(env_series) == 0:
        raise ValueError("environment series is empty")
    mu = drift_rates(env_series, p)
    return first_passage_mu(a0, mu, p.sigma, p.threshold, p.dt, substeps=substeps)


def env_series_for_direction(pair: TrajectoryPair, direction: int) -> list:
    """EnvStep series for one direction of a pair (absence already substituted)."""
    if direction not in pair.lanes_available:
        raise ValueError(
            f"direction {direction} not available for pair "
            f"{pair.hv_id}/{pair.car_id} (available: {pair.lanes_available})")
    series = []
    for step in pair.steps:
        nb = step.neighbors[direction]
        series.append(EnvStep(g_f=nb.g_f, v_adj=nb.v_adj, v_hv=step.v_hv,
                              delta_g=step.delta_g[direction]))
    return series


def decision_probability_series(pair: TrajectoryPair, direction: int,
                                p: DdmParams, substeps: int = 1) -> FirstPassageResult:
    """Distribution of the decision time for one direction of a pair."""
    env = env_series_for_direction(pair, direction)
    a0 = initial_evidence(initial_headway(pair), p)
    return first_passage(a0, env, p, substeps=substeps)
