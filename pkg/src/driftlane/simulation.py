"""Monte-Carlo simulation of the discretized evidence process.

Used two ways: as an independent oracle for the first-passage recursion and
as a synthetic-data generator for parameter-recovery checks.

Paths follow the Euler form A(t_{i+1}) = A(t_i) + mu_i*dt + sigma*Z*sqrt(dt)
with Philox counter-based streams keyed by (seed, pair, direction, chunk),
so results are reproducible under any execution schedule.

By default a Brownian-bridge correction accounts for threshold crossings
inside a step (the crossing is attributed to the step's right grid point).
Without it the empirical passage law carries an O(sqrt(dt)) barrier-shift
bias that the continuous-time recursion does not share; grid-only
detection remains available via ``bridge=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ddm import DdmParams, EnvStep, drift_rates, drift_rates_from_arrays
from .trajectories import (CENSORED, LC_LEFT, LC_RIGHT, NeighborSnapshot,
                           PairStep, TrajectoryPair)

_CHUNK = 16384


def _stream(seed: int, *ids: int) -> np.random.Generator:
    # Philox takes a 2x64-bit key; fold the stream ids into the second word
    # with a splitmix-style mix so distinct (pair, direction, chunk) tuples
    # get well-separated streams.
    mask = (1 << 64) - 1
    h = 0x9E3779B97F4A7C15
    for i in ids:
        h = (h ^ (int(i) & mask)) * 0xBF58476D1CE4E5B9 & mask
        h = (h ^ (h >> 31)) * 0x94D049BB133111EB & mask
        h ^= h >> 29
    key = np.array([int(seed) & mask, h], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SimConfig:
    n_paths: int
    seed: int
    dt: float
    horizon: float
    params: DdmParams

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"horizon {self.horizon} is not a multiple of dt {self.dt}")

    @property
    def n_grid(self) -> int:
        return int(round(self.horizon / self.dt)) + 1


@dataclass
class PassageSample:
    """Empirical first-passage sample on the grid t_i = i * dt."""

    steps: np.ndarray       # crossing grid index per path, -1 when censored
    n_grid: int
    dt: float

    @property
    def n_paths(self) -> int:
        return len(self.steps)

    @property
    def n_censored(self) -> int:
        return int(np.sum(self.steps < 0))

    def times(self) -> np.ndarray:
        t = self.steps * self.dt
        return np.where(self.steps >= 0, t, np.nan)

    def passage_counts(self) -> np.ndarray:
        hit = self.steps[self.steps >= 0]
        return np.bincount(hit, minlength=self.n_grid)

    def empirical_cdf(self) -> np.ndarray:
        return np.cumsum(self.passage_counts()) / self.n_paths

    def cdf_at(self, t: float) -> float:
        i = min(int(round(t / self.dt)), self.n_grid - 1)
        return float(np.sum((self.steps >= 0) & (self.steps <= i)) / self.n_paths)


def _resolve_mu(mu_or_env, n_grid: int, params: DdmParams) -> np.ndarray:
    if np.isscalar(mu_or_env):
        return np.full(n_grid, float(mu_or_env))
    if len(mu_or_env) and isinstance(mu_or_env[0], EnvStep):
        mu = drift_rates(mu_or_env, params)
    else:
        mu = np.asarray(mu_or_env, dtype=float)
    if len(mu) < n_grid:
        raise ValueError(f"drift series of length {len(mu)} shorter than the "
                         f"{n_grid}-point grid")
    return mu[:n_grid]


def simulate_paths(a0: float, mu_or_env, cfg: SimConfig, bridge: bool = True,
                   stream_ids: tuple = (0, 0)) -> PassageSample:
    """Simulate evidence paths and record first threshold crossings.

    ``mu_or_env`` is a constant drift, a drift series on the grid, or an
    EnvStep series.  Crossings are recorded at the right grid point of the
    step in which they occur; with ``bridge=True`` within-step excursions
    are detected via the Brownian-bridge crossing probability.
    """
    p = cfg.params
    if a0 >= p.threshold:
        raise ValueError("process starts absorbed (initial evidence >= threshold)")
    n_grid = cfg.n_grid
    mu = _resolve_mu(mu_or_env, n_grid, p)
    sigma = p.sigma
    dt = cfg.dt
    sq = math.sqrt(dt)
    use_bridge = bridge and sigma > 0
    out = np.full(cfg.n_paths, -1, dtype=np.int64)

    n_chunks = (cfg.n_paths + _CHUNK - 1) // _CHUNK
    for ci in range(n_chunks):
        lo = ci * _CHUNK
        m = min(_CHUNK, cfg.n_paths - lo)
        rng = _stream(cfg.seed, stream_ids[0], stream_ids[1], ci)
        a = np.full(m, a0)
        alive = np.ones(m, dtype=bool)
        hit_step = np.full(m, -1, dtype=np.int64)
        for i in range(n_grid - 1):
            if sigma > 0:
                z = rng.standard_normal(m)
            else:
                z = 0.0
            new = a + mu[i] * dt + sigma * sq * z
            crossed = new >= p.threshold
            if use_bridge:
                u = rng.random(m)
                pb = np.exp(-2.0 * np.maximum(p.threshold - a, 0.0)
                            * np.maximum(p.threshold - new, 0.0)
                            / (sigma * sigma * dt))
                crossed = crossed | (u < pb)
            fresh = alive & crossed
            hit_step[fresh] = i + 1
            alive &= ~fresh
            a = new
            if not alive.any():
                break
        out[lo:lo + m] = hit_step
    return PassageSample(steps=out, n_grid=n_grid, dt=dt)


# ---------------------------------------------------------------------------
# Synthetic pair generation
# ---------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """Distributions for synthetic HV-car episodes.

    Environment processes are piecewise constant with exponential switching
    (rate per second), the simplest processes that exercise gap-growth
    transitions.
    """

    duration_range: tuple = (5.0, 40.0)
    headway_range: tuple = (0.3, 3.0)       # initial time headway, s
    v_hv_range: tuple = (15.0, 25.0)        # heavy-vehicle speed, m/s
    g_f_range: tuple = (4.0, 40.0)          # adjacent follow gap, m
    g_l_range: tuple = (5.0, 60.0)          # adjacent lead gap, m
    dv_range: tuple = (-6.0, 6.0)           # adjacent leader speed advantage, m/s
    switch_rate: float = 0.2                # env switches per second
    p_two_lanes: float = 0.5

    def __post_init__(self):
        for name in ("duration_range", "headway_range", "v_hv_range",
                     "g_f_range", "g_l_range", "dv_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"invalid scenario range {name}={lo, hi}")
        if self.duration_range[0] < 0 or self.headway_range[0] < 0:
            raise ValueError("durations and headways must be non-negative")
        if self.switch_rate < 0:
            raise ValueError("switch_rate must be non-negative")
        if not 0.0 <= self.p_two_lanes <= 1.0:
            raise ValueError("p_two_lanes must be a probability")


@dataclass
class GenerationStats:
    n_pairs: int = 0
    n_lc: int = 0
    n_ties: int = 0
    outcomes: dict = field(default_factory=dict)


def _piecewise_constant(rng, n: int, dt: float, rate: float, lo: float,
                        hi: float) -> np.ndarray:
    vals = np.empty(n)
    i = 0
    while i < n:
        v = rng.uniform(lo, hi)
        if rate > 0:
            hold = max(int(round(rng.exponential(1.0 / rate) / dt)), 1)
        else:
            hold = n
        vals[i:i + hold] = v
        i += hold
    return vals


def generate_synthetic_pairs(truth: DdmParams, n_pairs: int,
                             scenario: ScenarioConfig | None = None,
                             seed: int = 0):
    """Draw synthetic pairs from the model at known parameters.

    Per pair, per available direction, an environment series is drawn and
    one evidence path is simulated; the outcome is the earliest threshold
    crossing across directions (same-step ties broken uniformly at random
    and counted) or censoring at the episode's end.

    Returns ``(pairs, stats)``.
    """
    scenario = scenario or ScenarioConfig()
    dt = truth.dt
    pairs = []
    stats = GenerationStats(n_pairs=n_pairs)
    for idx in range(n_pairs):
        rng = _stream(seed, idx, 0xEC0)
        duration = rng.uniform(*scenario.duration_range)
        n = int(round(duration / dt)) + 1
        two_lanes = rng.random() < scenario.p_two_lanes
        if two_lanes:
            directions = (-1, 1)
        else:
            directions = (int(rng.choice([-1, 1])),)
        v_hv = rng.uniform(*scenario.v_hv_range)
        v_car = v_hv
        h0 = rng.uniform(*scenario.headway_range)
        g_hv0 = h0 * max(v_car, 0.1)
        a0 = truth.evidence_base - truth.alpha * h0

        env = {}
        for d in directions:
            g_f = _piecewise_constant(rng, n, dt, scenario.switch_rate,
                                      *scenario.g_f_range)
            g_l = _piecewise_constant(rng, n, dt, scenario.switch_rate,
                                      *scenario.g_l_range)
            dv = _piecewise_constant(rng, n, dt, scenario.switch_rate,
                                     *scenario.dv_range)
            total = g_f + g_l
            delta = np.zeros(n)
            delta[1:] = (total[1:] > total[:-1]).astype(float)
            env[d] = (g_f, g_l, dv, delta)

        crossing = {}
        for d in directions:
            g_f, g_l, dv, delta = env[d]
            mu = drift_rates_from_arrays(g_f, dv, delta, truth)
            cfg = SimConfig(n_paths=1, seed=seed, dt=dt,
                            horizon=(n - 1) * dt, params=truth)
            sample = simulate_paths(a0, mu, cfg, bridge=True,
                                    stream_ids=(idx, d & 0xFF))
            if sample.steps[0] >= 0:
                crossing[d] = int(sample.steps[0])

        outcome = CENSORED
        last = n - 1
        if crossing:
            best = min(crossing.values())
            winners = sorted(d for d, s in crossing.items() if s == best)
            if len(winners) > 1:
                stats.n_ties += 1
                d_win = winners[int(rng.integers(len(winners)))]
            else:
                d_win = winners[0]
            outcome = LC_LEFT if d_win < 0 else LC_RIGHT
            last = best
            stats.n_lc += 1

        steps = []
        for i in range(last + 1):
            step = PairStep(t=i * dt, g_hv=g_hv0, v_car=v_car, v_hv=v_hv,
                            a_car=0.0, a_hv=0.0)
            for d in directions:
                g_f, g_l, dv, delta = env[d]
                step.neighbors[d] = NeighborSnapshot(
                    direction=d, g_l=float(g_l[i]), g_f=float(g_f[i]),
                    v_adj=float(v_hv + dv[i]), lane_exists=True)
                step.delta_g[d] = int(delta[i])
            steps.append(step)
        pairs.append(TrajectoryPair(
            hv_id=f"hv{idx:04d}", car_id=f"car{idx:04d}",
            t0=0.0, tmax=last * dt,
            start_event=4, end_event=1 if outcome != CENSORED else 4,
            steps=steps, outcome=outcome,
            lanes_available=tuple(sorted(directions)),
        ))
    stats.outcomes = {
        o: sum(1 for p in pairs if p.outcome == o)
        for o in (LC_LEFT, LC_RIGHT, CENSORED)
    }
    return pairs, stats
