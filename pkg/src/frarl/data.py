"""Vehicle trajectory files and the scenario pool built from them.

Trajectory files use the longitudinal subset of the highD track schema: a
header row followed by one row per vehicle and frame (25 Hz)::

    id,frame,laneId,x,xVelocity,xAcceleration

The synthetic generator writes the same schema so that the preprocessing path
is identical for real and generated data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .sim import Scenario, SimConfig

COLUMNS = ("id", "frame", "laneId", "x", "xVelocity", "xAcceleration")
FRAME_RATE = 25.0


class SchemaError(ValueError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class Trajectory:
    vehicle_id: int
    frames: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __len__(self) -> int:
        return len(self.frames)


def load_trajectories(path) -> List[Trajectory]:
    """Read lane-following vehicles from a trajectory file.

    Vehicles whose lane id changes are dropped.  Rows of one vehicle may come
    in any order; they are sorted by frame.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing columns {missing}", row=1)
        col = {c: header.index(c) for c in COLUMNS}
        rows: Dict[int, List[Tuple[int, int, float, float, float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
            values = []
            for c, cast in zip(COLUMNS, (int, int, int, float, float, float)):
                raw = row[col[c]].strip()
                try:
                    v = cast(raw)
                except ValueError:
                    raise SchemaError(f"cannot parse {raw!r} as {cast.__name__}", lineno, c) from None
                if cast is float and not math.isfinite(v):
                    raise SchemaError(f"non-finite value {raw!r}", lineno, c)
                values.append(v)
            vid, frame, lane, x, v, a = values
            rows.setdefault(vid, []).append((frame, lane, x, v, a))

    out = []
    for vid, recs in rows.items():
        recs.sort()
        if len({r[1] for r in recs}) != 1:
            continue
        arr = np.array([(r[0], r[2], r[3], r[4]) for r in recs], dtype=float)
        out.append(Trajectory(vid, arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3]))
    return out


@dataclass
class ScenarioSplit:
    train: List[Scenario]
    test: List[Scenario]


def trajectory_to_trace(acceleration: np.ndarray, length: int = 250) -> Optional[np.ndarray]:
    """First ``length`` samples followed by their mirror image, or None if too short."""
    if len(acceleration) < length:
        return None
    head = np.asarray(acceleration[:length], dtype=float)
    return np.concatenate([head, head[::-1]])


def preprocess(
    trajectories: Sequence[Trajectory],
    rng: np.random.Generator,
    cfg: SimConfig = SimConfig(),
    train_fraction: float = 0.7,
) -> ScenarioSplit:
    """Turn long-enough trajectories into 500-step dataset scenarios and split them.

    The lead offset and the ego's initial velocity are not part of the
    recording; they are drawn here from the configured ranges so that every
    pooled scenario is fully specified.
    """
    half = cfg.max_steps // 2
    scenarios = []
    for tr in trajectories:
        accel = trajectory_to_trace(tr.acceleration, half)
        if accel is None:
            continue
        scenarios.append(
            Scenario(
                offset=float(rng.uniform(*cfg.offset_range)),
                lead_velocity=float(max(0.0, tr.velocity[0])),
                lead_accel=np.clip(accel, -cfg.a_max, cfg.a_max),
                ego_velocity=float(rng.uniform(*cfg.ego_velocity_range)),
                source="dataset",
            )
        )
    order = rng.permutation(len(scenarios))
    n_train = int(round(train_fraction * len(scenarios)))
    return ScenarioSplit(
        train=[scenarios[i] for i in order[:n_train]],
        test=[scenarios[i] for i in order[n_train:]],
    )


# --------------------------------------------------------------------------
# Synthetic highway data


def _idm(v, v_lead, gap, v0, headway, a_max=1.2, b=2.0, s0=2.0):
    s_star = s0 + max(0.0, v * headway + v * (v - v_lead) / (2 * math.sqrt(a_max * b)))
    return a_max * (1 - (v / v0) ** 4 - (s_star / max(gap, 0.1)) ** 2)


def _synthetic_vehicle(rng: np.random.Generator, length: int, cfg: SimConfig):
    dt = 1.0 / FRAME_RATE
    # scripted leader: piecewise-constant mild accelerations, rare firm braking
    lead_a = np.empty(length)
    k = 0
    while k < length:
        seg = int(rng.integers(50, 150))
        level = -3.0 if rng.random() < 0.05 else float(np.clip(rng.normal(0.0, 0.5), -2.0, 1.5))
        lead_a[k : k + seg] = level
        k += seg
    # leader speeds keep the recorded follower inside the simulator's velocity ranges
    v_l = float(rng.uniform(cfg.lead_velocity_range[0] + 2.0, cfg.lead_velocity_range[1] - 2.0))
    v0 = v_l + float(rng.uniform(0.0, 4.0))
    headway = float(rng.uniform(1.0, 2.0))
    v = max(0.0, v_l + float(rng.uniform(-2.0, 2.0)))
    gap = 2.0 + v * headway + float(rng.uniform(0.0, 20.0))
    x = float(rng.uniform(0.0, 50.0))
    xs, vs, accs = np.empty(length), np.empty(length), np.empty(length)
    for t in range(length):
        a = _idm(v, v_l, gap, v0, headway) + float(rng.uniform(-0.3, 0.3))
        a = float(np.clip(a, -cfg.a_max, cfg.a_max))
        if v + a * dt < 0:
            a = -v / dt
        xs[t], vs[t], accs[t] = x, v, a
        v = max(0.0, v + a * dt)
        x += v * dt
        v_l = max(0.0, v_l + lead_a[t] * dt)
        gap += (v_l - v) * dt
    return xs, vs, accs


def generate_synthetic_dataset(
    n: int,
    rng: np.random.Generator,
    path=None,
    cfg: SimConfig = SimConfig(),
    lane_change_fraction: float = 0.0,
    length_range: Tuple[int, int] = (100, 700),
) -> List[Trajectory]:
    """``n`` intelligent-driver-model followers behind scripted leaders.

    Lengths are uniform in ``length_range`` frames, so with the defaults 75 %
    of the vehicles are long enough for preprocessing.  A fraction of the
    vehicles can be made to change lanes halfway, to exercise the lane filter.
    When ``path`` is given the trajectories are written in the file schema.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    trajs = []
    lanes = []
    frame = 0
    for vid in range(1, n + 1):
        length = int(rng.integers(length_range[0], length_range[1] + 1))
        xs, vs, accs = _synthetic_vehicle(rng, length, cfg)
        start = frame + int(rng.integers(0, 100))
        frames = np.arange(start, start + length)
        lane = np.full(length, int(rng.choice([2, 3, 5, 6])))
        if rng.random() < lane_change_fraction:
            lane[length // 2 :] += 1
        trajs.append(Trajectory(vid, frames, xs, vs, accs))
        lanes.append(lane)
        frame = start
    if path is not None:
        write_trajectories(trajs, lanes, path)
    return [t for t, lane in zip(trajs, lanes) if np.all(lane == lane[0])]


def write_trajectories(trajectories: Sequence[Trajectory], lanes: Sequence[np.ndarray], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for tr, lane in zip(trajectories, lanes):
            for f, l, x, v, a in zip(tr.frames, lane, tr.position, tr.velocity, tr.acceleration):
                w.writerow([tr.vehicle_id, int(f), int(l), f"{x:.4f}", f"{v:.4f}", f"{a:.4f}"])
