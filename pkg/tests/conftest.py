import io

import numpy as np
import pytest

from driftlane.trajectories import (NeighborSnapshot, PairStep,
                                    TrajectoryPair, parse_trajectories)

HEADER = "vehicle_id,time_s,lane,x_m,speed_mps,accel_mps2,class,length_m"


def rows_for(vehicle_id, t0, n, lane, x0, v, vclass, length, a=0.0,
             lane_fn=None, x_fn=None):
    """CSV rows for one vehicle at 0.1 s cadence with constant speed.

    ``lane_fn(i)`` / ``x_fn(i)`` override the per-step lane / position.
    """
    rows = []
    for i in range(n):
        t = t0 + 0.1 * i
        lane_i = lane_fn(i) if lane_fn else lane
        x_i = x_fn(i) if x_fn else x0 + v * (0.1 * i)
        rows.append(f"{vehicle_id},{t:.1f},{lane_i},{x_i:.3f},{v},{a},{vclass},{length}")
    return rows


def make_csv(*row_groups):
    return "\n".join([HEADER] + [r for g in row_groups for r in g]) + "\n"


def parse_csv(*row_groups):
    return parse_trajectories(io.StringIO(make_csv(*row_groups)))


@pytest.fixture
def lc_scenario_csv():
    """Car C enters lane 4 behind HV H at t=3.0 (its own LC) and leaves to
    the left at t=20.1; constant 18 m bumper gap in between."""
    n = 252  # t = 0.0 .. 25.1
    hv = rows_for("H", 0.0, n, 4, 200.0, 20.0, "heavy_vehicle", 12.0)

    def car_lane(i):
        t = 0.1 * i
        if t < 3.0 - 1e-9:
            return 5
        if t < 20.1 - 1e-9:
            return 4
        return 3

    car = rows_for("C", 0.0, n, 4, 170.0, 20.0, "car", 4.5, lane_fn=car_lane)
    return make_csv(hv, car)


def synthetic_pair(n_steps=60, directions=(-1, 1), g_hv=30.0, v_car=15.0,
                   v_hv=15.0, g_f=20.0, g_l=25.0, v_adj=None, delta_g=0,
                   outcome="CENSORED", dt=0.1):
    """Hand-built pair with constant environment, for unit tests."""
    if v_adj is None:
        v_adj = v_hv
    steps = []
    for i in range(n_steps):
        step = PairStep(t=i * dt, g_hv=g_hv, v_car=v_car, v_hv=v_hv,
                        a_car=0.0, a_hv=0.0)
        for d in directions:
            step.neighbors[d] = NeighborSnapshot(
                direction=d, g_l=g_l, g_f=g_f, v_adj=v_adj)
            step.delta_g[d] = delta_g if i > 0 else 0
        steps.append(step)
    return TrajectoryPair(
        hv_id="H", car_id="C", t0=0.0, tmax=(n_steps - 1) * dt,
        start_event=4, end_event=1 if outcome != "CENSORED" else 4,
        steps=steps, outcome=outcome,
        lanes_available=tuple(sorted(directions)),
    )


def build_corpus_csv(header=HEADER, rename=None):
    """Six HV-car episodes on lanes 3-5 at disjoint times; episodes 1 and 4
    end with the car changing lane (left and right respectively).

    ``rename`` optionally maps logical column names to alternative headers,
    producing a file that needs a schema mapping to parse.
    """
    groups = []
    for k in range(6):
        t0 = 40.0 * k
        n = 251                      # 25 s of coverage per episode
        gap = 10.0 + 3.0 * k
        hv = rows_for(f"H{k}", t0, n, 4, 200.0, 20.0, "heavy_vehicle", 12.0)
        if k == 1:
            lane_fn = lambda i: 4 if i <= 150 else 3   # LC left at t0+15.1
        elif k == 4:
            lane_fn = lambda i: 4 if i <= 150 else 5   # LC right at t0+15.1
        else:
            lane_fn = None
        car = rows_for(f"C{k}", t0, n, 4, 200.0 - 12.0 - gap, 20.0,
                       "car", 4.5, lane_fn=lane_fn)
        groups.extend([hv, car])
    text = make_csv(*groups)
    if rename:
        cols = HEADER.split(",")
        text = ",".join(rename.get(c, c) for c in cols) + \
            text[len(HEADER):]
    return text


def inverse_gaussian_cdf(t, mu, sigma, barrier):
    """Closed-form first-passage CDF of a constant-drift Wiener process."""
    from scipy.stats import norm
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    st = sigma * np.sqrt(tp)
    out[pos] = (norm.cdf((mu * tp - barrier) / st)
                + np.exp(2.0 * mu * barrier / sigma ** 2)
                * norm.cdf((-mu * tp - barrier) / st))
    return out
