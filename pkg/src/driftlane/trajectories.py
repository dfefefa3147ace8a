"""Trajectory parsing and HV-car pair extraction.

Reads per-vehicle trajectory records from CSV, identifies episodes where a
car directly follows a heavy vehicle, and computes per-step gaps and
adjacent-lane environment variables for each episode.

Conventions used throughout:

* ``x`` is the longitudinal position of the *front bumper*, increasing
  downstream.  All gaps are bumper-to-bumper: leader rear minus follower
  front.
* Time stamps are multiples of 0.1 s.  Internally times are handled as
  integer deciseconds to avoid float-key trouble.
* Lane orientation is configurable: by default a higher lane index is
  further to the right, so a lane-index increase is a right lane change
  (direction +1) and a decrease is a left one (direction -1).
"""

from __future__ import annotations

import csv
import io
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

CAR = "car"
HEAVY_VEHICLE = "heavy_vehicle"

LC_LEFT = "LC_LEFT"
LC_RIGHT = "LC_RIGHT"
CENSORED = "CENSORED"

#: required logical column names; a schema maps these to actual CSV headers
REQUIRED_COLUMNS = (
    "vehicle_id",
    "time_s",
    "lane",
    "x_m",
    "speed_mps",
    "accel_mps2",
    "class",
    "length_m",
)

_CLASS_SYNONYMS = {
    "car": CAR,
    "heavy_vehicle": HEAVY_VEHICLE,
    "hv": HEAVY_VEHICLE,
    "truck": HEAVY_VEHICLE,
}

DEFAULT_LANES = frozenset({3, 4, 5})
DEFAULT_MIN_DURATION = 5.0

#: floor applied to the car speed when converting the initial gap to a
#: time headway, m/s
SPEED_FLOOR = 0.1


class InputError(ValueError):
    """Malformed or inconsistent user input (CSV, schema, config)."""


def _ds(t: float) -> int:
    """Time in seconds -> integer deciseconds."""
    return int(round(t * 10.0))


@dataclass
class TrajectorySample:
    """One vehicle's state at one timestamp."""

    vehicle_id: str
    t: float
    lane: int
    x: float
    v: float
    a: float
    vclass: str
    length: float


@dataclass
class VehicleTrack:
    """A contiguous 0.1 s-cadence record of one vehicle."""

    vehicle_id: str
    vclass: str
    length: float
    t: np.ndarray
    lane: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def samples(self):
        for i in range(len(self.t)):
            yield TrajectorySample(
                self.vehicle_id, float(self.t[i]), int(self.lane[i]),
                float(self.x[i]), float(self.v[i]), float(self.a[i]),
                self.vclass, self.length,
            )


@dataclass
class NeighborSnapshot:
    """Adjacent-lane context for one direction at one timestep.

    ``g_l``/``g_f``/``v_adj`` are always populated; when no qualifying
    neighbor is observed the censored-gap substitution has been applied
    (distance to the observed site edge, own speed for ``v_adj``) and the
    corresponding ``*_observed`` flag is False.
    """

    direction: int
    g_l: float
    g_f: float
    v_adj: float
    lane_exists: bool = True
    g_l_observed: bool = True
    g_f_observed: bool = True
    v_adj_observed: bool = True

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "g_l": self.g_l,
            "g_f": self.g_f,
            "v_adj": self.v_adj,
            "lane_exists": self.lane_exists,
            "g_l_observed": self.g_l_observed,
            "g_f_observed": self.g_f_observed,
            "v_adj_observed": self.v_adj_observed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeighborSnapshot":
        return cls(**d)


@dataclass
class PairStep:
    """State of one HV-car pair at one timestep."""

    t: float
    g_hv: float
    v_car: float
    v_hv: float
    a_car: float
    a_hv: float
    neighbors: dict = field(default_factory=dict)  # direction -> NeighborSnapshot
    delta_g: dict = field(default_factory=dict)    # direction -> 0/1

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "g_hv": self.g_hv,
            "v_car": self.v_car,
            "v_hv": self.v_hv,
            "a_car": self.a_car,
            "a_hv": self.a_hv,
            "neighbors": {str(d): s.to_dict() for d, s in sorted(self.neighbors.items())},
            "delta_g": {str(d): int(v) for d, v in sorted(self.delta_g.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairStep":
        return cls(
            t=d["t"], g_hv=d["g_hv"], v_car=d["v_car"], v_hv=d["v_hv"],
            a_car=d["a_car"], a_hv=d["a_hv"],
            neighbors={int(k): NeighborSnapshot.from_dict(v) for k, v in d["neighbors"].items()},
            delta_g={int(k): int(v) for k, v in d["delta_g"].items()},
        )


@dataclass
class TrajectoryPair:
    """An HV-car following episode delimited by the start/end event grammar.

    ``start_event`` / ``end_event`` are 1..4:

    start: 1 car changed lane to follow the HV, 2 the HV changed lane to
    lead the car, 3 an in-between vehicle left the lane, 4 onset censored
    (episode already under way when first observed).

    end: 1 the car changed lane (the modeled decision), 2 the HV changed
    lane, 3 a vehicle cut in ahead of the car, 4 censored by the edge of
    the observation window.
    """

    hv_id: str
    car_id: str
    t0: float
    tmax: float
    start_event: int
    end_event: int
    steps: list = field(default_factory=list)
    outcome: str = CENSORED
    lanes_available: tuple = ()

    @property
    def duration(self) -> float:
        return self.tmax - self.t0

    def to_dict(self) -> dict:
        return {
            "hv_id": self.hv_id,
            "car_id": self.car_id,
            "t0": self.t0,
            "tmax": self.tmax,
            "start_event": self.start_event,
            "end_event": self.end_event,
            "outcome": self.outcome,
            "lanes_available": sorted(self.lanes_available),
            "steps": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryPair":
        return cls(
            hv_id=d["hv_id"], car_id=d["car_id"], t0=d["t0"], tmax=d["tmax"],
            start_event=d["start_event"], end_event=d["end_event"],
            outcome=d["outcome"],
            lanes_available=tuple(sorted(d["lanes_available"])),
            steps=[PairStep.from_dict(s) for s in d["steps"]],
        )


def outcome_direction(outcome: str) -> int:
    """Lateral direction of an LC outcome; 0 for CENSORED."""
    return {LC_LEFT: -1, LC_RIGHT: 1, CENSORED: 0}[outcome]


def adjacent_lane(lane: int, direction: int, right_is_higher_index: bool = True) -> int:
    return lane + direction if right_is_higher_index else lane - direction


def lane_change_direction(lane_before: int, lane_after: int,
                          right_is_higher_index: bool = True) -> int:
    delta = lane_after - lane_before
    if delta == 0:
        return 0
    d = 1 if delta > 0 else -1
    return d if right_is_higher_index else -d


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_trajectories(source, schema: dict | None = None) -> list:
    """Parse a CSV stream into contiguous per-vehicle tracks.

    ``source`` is a path, a file-like object, or a string of CSV text with a
    header row.  ``schema`` optionally renames columns: a mapping from the
    logical names in ``REQUIRED_COLUMNS`` to the actual CSV header names.

    A gap in a vehicle's record that is a whole multiple of 0.1 s splits it
    into separate contiguous tracks; any other cadence is an error.

    Returns tracks sorted by (vehicle_id, first timestamp).
    """
    close = False
    if isinstance(source, (str,)) and "\n" not in source and "," not in source:
        fh = open(source, "r", newline="")
        close = True
    elif isinstance(source, str):
        fh = io.StringIO(source)
    else:
        fh = source
    try:
        return _parse_stream(fh, schema or {})
    finally:
        if close:
            fh.close()


def _parse_stream(fh, schema: dict) -> list:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty input: no CSV header")
    header = [h.strip() for h in header]
    col_idx = {}
    for logical in REQUIRED_COLUMNS:
        actual = schema.get(logical, logical)
        if actual not in header:
            raise InputError(f"missing required column '{actual}' (for '{logical}')")
        col_idx[logical] = header.index(actual)

    rows_by_vehicle: dict = {}
    meta: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vid = row[col_idx["vehicle_id"]].strip()
            t = float(row[col_idx["time_s"]])
            lane = int(float(row[col_idx["lane"]]))
            x = float(row[col_idx["x_m"]])
            v = float(row[col_idx["speed_mps"]])
            a = float(row[col_idx["accel_mps2"]])
            vclass_raw = row[col_idx["class"]].strip().lower()
            length = float(row[col_idx["length_m"]])
        except ValueError as exc:
            raise InputError(f"line {lineno}: malformed row ({exc})") from None
        if vclass_raw not in _CLASS_SYNONYMS:
            raise InputError(f"line {lineno}: unknown vehicle class '{vclass_raw}'")
        if v < 0:
            raise InputError(f"line {lineno}: negative speed {v}")
        if length <= 0:
            raise InputError(f"line {lineno}: non-positive length {length}")
        if abs(t * 10.0 - round(t * 10.0)) > 1e-6:
            raise InputError(f"line {lineno}: timestamp {t} is not a multiple of 0.1 s")
        vclass = _CLASS_SYNONYMS[vclass_raw]
        prev = meta.get(vid)
        if prev is None:
            meta[vid] = (vclass, length)
        elif prev != (vclass, length):
            raise InputError(f"line {lineno}: vehicle {vid} changed class or length")
        rows_by_vehicle.setdefault(vid, []).append((_ds(t), lane, x, v, a))

    tracks = []
    for vid in sorted(rows_by_vehicle):
        rows = sorted(rows_by_vehicle[vid], key=lambda r: r[0])
        vclass, length = meta[vid]
        seg_start = 0
        for i in range(1, len(rows) + 1):
            if i < len(rows):
                gap = rows[i][0] - rows[i - 1][0]
                if gap == 0:
                    raise InputError(
                        f"vehicle {vid}: duplicate timestamp {rows[i][0] / 10.0}")
                if gap == 1:
                    continue
                # any whole-decisecond gap splits the record; fractional
                # cadence was already rejected at the row level
            seg = rows[seg_start:i]
            tracks.append(VehicleTrack(
                vehicle_id=vid, vclass=vclass, length=length,
                t=np.array([r[0] / 10.0 for r in seg]),
                lane=np.array([r[1] for r in seg], dtype=int),
                x=np.array([r[2] for r in seg]),
                v=np.array([r[3] for r in seg]),
                a=np.array([r[4] for r in seg]),
            ))
            seg_start = i
    return tracks


# ---------------------------------------------------------------------------
# Occupancy index
# ---------------------------------------------------------------------------

class TrafficIndex:
    """Time/lane occupancy lookup over a set of parsed tracks."""

    def __init__(self, tracks: list):
        self.tracks = tracks
        self.by_time_lane: dict = {}
        self.tracks_by_id: dict = {}
        self.observed_lanes: set = set()
        x_min = math.inf
        x_max = -math.inf
        for tr in tracks:
            self.tracks_by_id.setdefault(tr.vehicle_id, []).append(tr)
            for i in range(len(tr)):
                key = (_ds(tr.t[i]), int(tr.lane[i]))
                self.by_time_lane.setdefault(key, []).append(
                    (float(tr.x[i]), tr, i))
                self.observed_lanes.add(int(tr.lane[i]))
                x_min = min(x_min, float(tr.x[i]) - tr.length)
                x_max = max(x_max, float(tr.x[i]))
        for entries in self.by_time_lane.values():
            entries.sort(key=lambda e: e[0])
        self.x_min = x_min
        self.x_max = x_max

    def sample_at(self, vehicle_id: str, ds: int):
        """(track, index) of this vehicle at decisecond ds, or None."""
        for tr in self.tracks_by_id.get(vehicle_id, ()):
            i0 = _ds(tr.t[0])
            i = ds - i0
            if 0 <= i < len(tr):
                return tr, i
        return None

    def leader_of(self, ds: int, lane: int, x: float):
        """Nearest same-lane entry strictly downstream of front bumper x."""
        entries = self.by_time_lane.get((ds, lane))
        if not entries:
            return None
        xs = [e[0] for e in entries]
        j = bisect_right(xs, x)
        # skip co-located entries (the vehicle itself)
        while j < len(entries) and entries[j][0] <= x:
            j += 1
        return entries[j] if j < len(entries) else None


# ---------------------------------------------------------------------------
# Pair extraction
# ---------------------------------------------------------------------------

def find_pairs(tracks: list, lanes=DEFAULT_LANES, min_duration: float = DEFAULT_MIN_DURATION,
               right_is_higher_index: bool = True, index: TrafficIndex | None = None) -> list:
    """Identify HV-car following episodes.

    A pair spans a maximal run of timesteps during which the car's direct
    leader (nearest same-lane vehicle downstream) is the same heavy vehicle
    and neither vehicle changes lane.  Episodes shorter than
    ``min_duration`` seconds are dropped.  The car's lane must be in
    ``lanes``; adjacent-lane availability is determined by which lane
    indices are observed anywhere in the data.

    Steps are left unpopulated; see :func:`compute_environment`.
    """
    if index is None:
        index = TrafficIndex(tracks)
    lanes = set(lanes)
    pairs = []
    for tr in tracks:
        if tr.vclass != CAR:
            continue
        n = len(tr)
        leaders = []
        for i in range(n):
            ent = index.leader_of(_ds(tr.t[i]), int(tr.lane[i]), float(tr.x[i]))
            leaders.append(ent)
        # run key: leader is an HV, car lane fixed, leader identity fixed
        run_start = None
        run_key = None

        def key_at(i):
            ent = leaders[i]
            if ent is None:
                return None
            _, lead_tr, _ = ent
            if lead_tr.vclass != HEAVY_VEHICLE:
                return None
            if int(tr.lane[i]) not in lanes:
                return None
            return (lead_tr.vehicle_id, int(tr.lane[i]))

        def close_run(s, e):
            if run_key is None:
                return
            pair = _build_pair(tr, leaders, s, e, index, min_duration,
                               right_is_higher_index)
            if pair is not None:
                pairs.append(pair)

        for i in range(n):
            k = key_at(i)
            if k != run_key:
                if run_key is not None:
                    close_run(run_start, i - 1)
                run_start = i if k is not None else None
                run_key = k
        if run_key is not None:
            close_run(run_start, n - 1)
    pairs.sort(key=lambda p: (p.t0, p.car_id))
    return pairs


def _build_pair(tr: VehicleTrack, leaders: list, s: int, e: int,
                index: TrafficIndex, min_duration: float,
                right_is_higher_index: bool):
    t0 = float(tr.t[s])
    tmax = float(tr.t[e])
    if tmax - t0 < min_duration - 1e-9:
        return None
    hv_tr = leaders[s][1]
    hv_id = hv_tr.vehicle_id
    lane = int(tr.lane[s])

    # ---- start event
    if s == 0:
        start_event = 4
    elif int(tr.lane[s - 1]) != lane:
        start_event = 1
    else:
        hv_prev = index.sample_at(hv_id, _ds(tr.t[s]) - 1)
        if hv_prev is None:
            start_event = 4
        elif int(hv_prev[0].lane[hv_prev[1]]) != lane:
            start_event = 2
        else:
            # previously a different (or no) direct leader: an in-between
            # vehicle left the lane
            start_event = 3

    # ---- end event and outcome
    outcome = CENSORED
    if e == len(tr) - 1:
        end_event = 4
    elif int(tr.lane[e + 1]) != lane:
        end_event = 1
        d = lane_change_direction(lane, int(tr.lane[e + 1]), right_is_higher_index)
        outcome = LC_LEFT if d < 0 else LC_RIGHT
    else:
        hv_next = index.sample_at(hv_id, _ds(tr.t[e]) + 1)
        if hv_next is None:
            end_event = 4
        elif int(hv_next[0].lane[hv_next[1]]) != lane:
            end_event = 2
        else:
            end_event = 3

    avail = tuple(sorted(
        d for d in (-1, 1)
        if adjacent_lane(lane, d, right_is_higher_index) in index.observed_lanes
    ))
    return TrajectoryPair(
        hv_id=hv_id, car_id=tr.vehicle_id, t0=t0, tmax=tmax,
        start_event=start_event, end_event=end_event,
        outcome=outcome, lanes_available=avail,
    )


def compute_environment(pair: TrajectoryPair, tracks_or_index,
                        right_is_higher_index: bool = True) -> TrajectoryPair:
    """Populate a pair's step series with gaps and adjacent-lane context.

    Adjacent leader: nearest adjacent-lane vehicle whose rear bumper is at
    or downstream of the car's front bumper.  Adjacent follower: nearest
    vehicle whose front bumper is at or behind the car's rear bumper.
    Vehicles alongside the car qualify as neither.  Missing neighbors get
    the censored-gap substitution (distance to the observed site edge) and
    ``v_adj`` defaults to the car's own speed.
    """
    index = tracks_or_index if isinstance(tracks_or_index, TrafficIndex) \
        else TrafficIndex(tracks_or_index)
    steps = []
    prev_total = {}
    ds0 = _ds(pair.t0)
    n_steps = _ds(pair.tmax) - ds0 + 1
    for k in range(n_steps):
        ds = ds0 + k
        car = index.sample_at(pair.car_id, ds)
        hv = index.sample_at(pair.hv_id, ds)
        if car is None or hv is None:
            raise RuntimeError(
                f"pair {pair.hv_id}/{pair.car_id}: missing sample at "
                f"t={ds / 10.0} (pair construction bug)")
        car_tr, ci = car
        hv_tr, hi = hv
        x_car = float(car_tr.x[ci])
        rear_car = x_car - car_tr.length
        lane = int(car_tr.lane[ci])
        g_hv = max((float(hv_tr.x[hi]) - hv_tr.length) - x_car, 0.0)
        step = PairStep(
            t=float(car_tr.t[ci]), g_hv=g_hv,
            v_car=float(car_tr.v[ci]), v_hv=float(hv_tr.v[hi]),
            a_car=float(car_tr.a[ci]), a_hv=float(hv_tr.a[hi]),
        )
        for d in pair.lanes_available:
            adj = adjacent_lane(lane, d, right_is_higher_index)
            entries = index.by_time_lane.get((ds, adj), ())
            lead = None
            follow = None
            for x_e, tr_e, i_e in entries:
                rear_e = x_e - tr_e.length
                if rear_e >= x_car and (lead is None or rear_e < lead[0]):
                    lead = (rear_e, tr_e, i_e)
                if x_e <= rear_car and (follow is None or x_e > follow[0]):
                    follow = (x_e, tr_e, i_e)
            if lead is not None:
                g_l = lead[0] - x_car
                v_adj = float(lead[1].v[lead[2]])
                g_l_obs = v_adj_obs = True
            else:
                g_l = max(index.x_max - x_car, 0.0)
                v_adj = float(car_tr.v[ci])
                g_l_obs = v_adj_obs = False
            if follow is not None:
                g_f = rear_car - follow[0]
                g_f_obs = True
            else:
                g_f = max(rear_car - index.x_min, 0.0)
                g_f_obs = False
            step.neighbors[d] = NeighborSnapshot(
                direction=d, g_l=g_l, g_f=g_f, v_adj=v_adj,
                lane_exists=True, g_l_observed=g_l_obs,
                g_f_observed=g_f_obs, v_adj_observed=v_adj_obs,
            )
            total = g_f + g_l
            step.delta_g[d] = 1 if (d in prev_total and total > prev_total[d]) else 0
            prev_total[d] = total
        steps.append(step)
    pair.steps = steps
    return pair


def extract_pairs(tracks: list, lanes=DEFAULT_LANES,
                  min_duration: float = DEFAULT_MIN_DURATION,
                  right_is_higher_index: bool = True) -> list:
    """find_pairs + compute_environment over one dataset."""
    index = TrafficIndex(tracks)
    pairs = find_pairs(tracks, lanes=lanes, min_duration=min_duration,
                       right_is_higher_index=right_is_higher_index, index=index)
    for p in pairs:
        compute_environment(p, index, right_is_higher_index)
    return pairs


def initial_headway(pair: TrajectoryPair) -> float:
    """Time headway at the first step, seconds, with a 0.1 m/s speed floor."""
    if not pair.steps:
        raise ValueError("pair has no steps")
    s0 = pair.steps[0]
    if s0.g_hv == 0.0:
        return 0.0
    return s0.g_hv / max(s0.v_car, SPEED_FLOOR)


# ---------------------------------------------------------------------------
# Pairs JSON
# ---------------------------------------------------------------------------

def write_pairs(pairs: list, path) -> None:
    with open(path, "w") as fh:
        json.dump([p.to_dict() for p in pairs], fh, indent=1)
        fh.write("\n")


def read_pairs(path) -> list:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise InputError("pairs file must contain a JSON array")
    return [TrajectoryPair.from_dict(d) for d in data]
