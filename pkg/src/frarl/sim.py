"""Longitudinal two-vehicle highway simulator.

An ego vehicle follows a leading vehicle on a straight 600 m lane.  Both are
point masses driven by an acceleration input and integrated with
semi-implicit Euler (velocity first).  The simulator is vectorized: one
:class:`DrivingEnv` holds a batch of independent episodes, which keeps the
per-step Python overhead independent of the number of actors or falsifier
candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .mtl import Trace

SOURCES = ("dataset", "random", "falsified", "adversary")

# termination causes
NONE, LANE_END, MAX_STEPS, COLLISION, REVERSE = range(5)
CAUSES = ("none", "lane-end", "max-steps", "collision", "reverse")

FEATURES = ("gap", "rel_velocity", "v_ego", "a_lead", "a_ego")


@dataclass(frozen=True)
class SimConfig:
    lane_length: float = 600.0
    max_steps: int = 500
    dt: float = 0.04
    a_max: float = 10.0
    reaction_delay: float = 0.3
    ego_start: float = 10.0
    offset_range: Tuple[float, float] = (0.0, 40.0)
    ego_velocity_range: Tuple[float, float] = (15.0, 35.0)
    lead_velocity_range: Tuple[float, float] = (15.0, 35.0)
    random_accel_range: Tuple[float, float] = (-5.0, 5.0)
    random_segment_steps: int = 25

    def __post_init__(self):
        for name in ("lane_length", "dt", "a_max", "reaction_delay", "ego_start"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1 or self.random_segment_steps < 1:
            raise ValueError("step counts must be positive")
        for name in ("offset_range", "ego_velocity_range", "lead_velocity_range", "random_accel_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty")

    @property
    def horizon(self) -> float:
        return self.dt * self.max_steps


@dataclass
class Scenario:
    """Initial condition and leading-vehicle input of one episode.

    ``ego_velocity`` of ``None`` means the ego's initial velocity is sampled
    at reset.  ``robustness`` is filled in for falsified scenarios.
    """

    offset: float
    lead_velocity: float
    lead_accel: np.ndarray
    ego_velocity: Optional[float] = None
    source: str = "dataset"
    robustness: Optional[float] = None

    def __post_init__(self):
        self.lead_accel = np.asarray(self.lead_accel, dtype=float)
        if self.source not in SOURCES:
            raise ValueError(f"unknown scenario source {self.source!r}")

    def validate(self, cfg: SimConfig) -> None:
        if self.lead_accel.shape != (cfg.max_steps,):
            raise ValueError(
                f"acceleration trace has length {self.lead_accel.shape}, expected {cfg.max_steps}"
            )
        lo, hi = cfg.offset_range
        if not lo <= self.offset <= hi:
            raise ValueError(f"offset {self.offset} outside {cfg.offset_range}")
        if not self.lead_velocity >= 0 or (self.ego_velocity is not None and not self.ego_velocity >= 0):
            raise ValueError("initial velocities must be non-negative")
        if not np.all(np.isfinite(self.lead_accel)):
            raise ValueError("acceleration trace has non-finite values")


def safe_distance(v_f, v_l, cfg: SimConfig = SimConfig()):
    """Minimum gap for collision-free emergency braking, floored at zero."""
    v_f = np.asarray(v_f, dtype=float)
    v_l = np.asarray(v_l, dtype=float)
    d = (v_f**2 - v_l**2) / (2 * cfg.a_max) + v_f * cfg.reaction_delay
    out = np.maximum(0.0, d)
    return float(out) if out.ndim == 0 else out


@dataclass
class SimState:
    """Batched vehicle state; every field has shape ``(n,)``."""

    x_ego: np.ndarray
    v_ego: np.ndarray
    a_ego: np.ndarray
    x_lead: np.ndarray
    v_lead: np.ndarray
    a_lead: np.ndarray
    steps: np.ndarray
    cause: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.x_lead - self.x_ego

    @property
    def done(self) -> np.ndarray:
        return self.cause != NONE

    @property
    def collision(self) -> np.ndarray:
        return self.cause == COLLISION

    @property
    def reverse(self) -> np.ndarray:
        return self.cause == REVERSE

    @classmethod
    def empty(cls, n: int) -> "SimState":
        z = lambda: np.zeros(n)
        return cls(z(), z(), z(), z(), z(), z(), np.zeros(n, dtype=int), np.zeros(n, dtype=int))


def observation(state: SimState) -> np.ndarray:
    """Policy features: gap, v_ego - v_lead, v_ego, a_lead, a_ego."""
    return np.stack(
        [state.gap, state.v_ego - state.v_lead, state.v_ego, state.a_lead, state.a_ego], axis=1
    )


def reward_ba(state: SimState) -> np.ndarray:
    """Braking assistance: -1 on collision or reverse driving, else 0."""
    return np.where(state.collision | state.reverse, -1.0, 0.0)


def reward_acc(state: SimState, cfg: SimConfig = SimConfig()) -> np.ndarray:
    """Adaptive cruise control reward; branches are checked in order."""
    gap = state.gap
    s_safe = np.atleast_1d(safe_distance(state.v_ego, state.v_lead, cfg))
    unsafe = state.collision | state.reverse
    close = gap < s_safe
    slow = state.v_ego < state.v_lead
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r_close = -0.1 * np.exp(-5.0 * gap / np.where(s_safe > 0, s_safe, 1.0))
        r_slow = -0.05 * np.exp(-5.0 * state.v_ego / np.where(state.v_lead > 0, state.v_lead, 1.0))
    return np.where(unsafe, -1.0, np.where(close, r_close, np.where(slow, r_slow, 0.0)))


def task_reward(task: str, state: SimState, cfg: SimConfig) -> np.ndarray:
    if task == "ba":
        return reward_ba(state)
    if task == "acc":
        return reward_acc(state, cfg)
    raise ValueError(f"unknown task {task!r}")


def adversary_reward(protagonist_reward):
    """The adversary is paid the negated protagonist reward."""
    return -np.asarray(protagonist_reward, dtype=float) if np.ndim(protagonist_reward) else -float(protagonist_reward)


class DrivingEnv:
    """A batch of ``n`` independent episodes.

    Finished episodes stay frozen until they are reset with :meth:`reset_at`;
    :meth:`step` only advances the running ones.
    """

    def __init__(self, cfg: SimConfig = SimConfig(), n: int = 1):
        self.cfg = cfg
        self.n = n
        self.state = SimState.empty(n)
        self.state.cause[:] = MAX_STEPS
        self.lead_accel = np.zeros((n, cfg.max_steps))
        self.scenarios: List[Optional[Scenario]] = [None] * n

    def reset(self, scenarios: Sequence[Scenario], rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if len(scenarios) != self.n:
            raise ValueError(f"expected {self.n} scenarios, got {len(scenarios)}")
        self.reset_at(np.arange(self.n), scenarios, rng)
        return observation(self.state)

    def reset_at(self, index, scenarios: Sequence[Scenario], rng: Optional[np.random.Generator] = None) -> None:
        cfg = self.cfg
        s = self.state
        for i, sc in zip(np.atleast_1d(index), scenarios):
            sc.validate(cfg)
            v_ego = sc.ego_velocity
            if v_ego is None:
                if rng is None:
                    raise ValueError("scenario has no ego velocity and no rng was given")
                v_ego = float(rng.uniform(*cfg.ego_velocity_range))
            s.x_ego[i] = cfg.ego_start
            s.v_ego[i] = v_ego
            s.a_ego[i] = 0.0
            s.x_lead[i] = cfg.ego_start + safe_distance(v_ego, sc.lead_velocity, cfg) + sc.offset
            s.v_lead[i] = sc.lead_velocity
            s.a_lead[i] = 0.0
            s.steps[i] = 0
            s.cause[i] = NONE
            self.lead_accel[i] = sc.lead_accel
            self.scenarios[i] = sc

    def observe(self) -> np.ndarray:
        return observation(self.state)

    def step(self, actions, lead_actions=None) -> Tuple[np.ndarray, np.ndarray]:
        """Advance all running episodes by one step.

        ``lead_actions`` overrides the scenario's leading-vehicle acceleration
        wherever it is not NaN.  Returns ``(observation, just_done)``.
        """
        cfg = self.cfg
        s = self.state
        active = s.cause == NONE
        if not np.any(active):
            raise RuntimeError("step called with every episode finished")
        a = np.clip(np.asarray(actions, dtype=float).reshape(self.n), -cfg.a_max, cfg.a_max)
        idx = np.flatnonzero(active)
        a_l = self.lead_accel[idx, s.steps[idx]]
        if lead_actions is not None:
            override = np.asarray(lead_actions, dtype=float).reshape(self.n)[idx]
            a_l = np.where(np.isnan(override), a_l, override)
        a_l = np.clip(a_l, -cfg.a_max, cfg.a_max)
        a = a[idx]

        v_e = s.v_ego[idx] + a * cfg.dt
        x_e = s.x_ego[idx] + v_e * cfg.dt
        v_l = np.maximum(0.0, s.v_lead[idx] + a_l * cfg.dt)
        x_l = s.x_lead[idx] + v_l * cfg.dt
        steps = s.steps[idx] + 1

        cause = np.full(len(idx), NONE)
        cause[steps >= cfg.max_steps] = MAX_STEPS
        cause[x_l >= cfg.lane_length] = LANE_END
        cause[v_e < 0] = REVERSE
        cause[x_l - x_e <= 0] = COLLISION

        s.v_ego[idx], s.x_ego[idx], s.a_ego[idx] = v_e, x_e, a
        s.v_lead[idx], s.x_lead[idx], s.a_lead[idx] = v_l, x_l, a_l
        s.steps[idx] = steps
        s.cause[idx] = cause
        just_done = np.zeros(self.n, dtype=bool)
        just_done[idx] = cause != NONE
        return observation(s), just_done


# --------------------------------------------------------------------------
# Scenario sources


def generate_random_scenario(rng: np.random.Generator, cfg: SimConfig = SimConfig()) -> Scenario:
    """Piecewise-constant leader acceleration with uniform initial conditions."""
    n_seg = math.ceil(cfg.max_steps / cfg.random_segment_steps)
    levels = rng.uniform(*cfg.random_accel_range, size=n_seg)
    accel = np.repeat(levels, cfg.random_segment_steps)[: cfg.max_steps]
    return Scenario(
        offset=float(rng.uniform(*cfg.offset_range)),
        lead_velocity=float(rng.uniform(*cfg.lead_velocity_range)),
        lead_accel=accel,
        ego_velocity=float(rng.uniform(*cfg.ego_velocity_range)),
        source="random",
    )


def random_scenarios(n: int, seed: int, cfg: SimConfig = SimConfig()) -> List[Scenario]:
    rng = np.random.default_rng(seed)
    return [generate_random_scenario(rng, cfg) for _ in range(n)]


_HEADER = "# frarl scenario v1"


def write_scenario(sc: Scenario, path) -> None:
    lines = [
        _HEADER,
        f"source: {sc.source}",
        f"offset: {float(sc.offset)!r}",
        f"lead_velocity: {float(sc.lead_velocity)!r}",
        f"ego_velocity: {'none' if sc.ego_velocity is None else repr(float(sc.ego_velocity))}",
        f"robustness: {'none' if sc.robustness is None else repr(float(sc.robustness))}",
        "acceleration:",
    ]
    lines += [repr(float(a)) for a in sc.lead_accel]
    Path(path).write_text("\n".join(lines) + "\n")


def read_scenario(path) -> Scenario:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != _HEADER:
        raise ValueError(f"{path}: not a scenario file")
    header: Dict[str, str] = {}
    i = 1
    while i < len(text) and text[i].strip() != "acceleration:":
        key, sep, value = text[i].partition(":")
        if not sep:
            raise ValueError(f"{path}:{i + 1}: malformed header line {text[i]!r}")
        header[key.strip()] = value.strip()
        i += 1
    if i == len(text):
        raise ValueError(f"{path}: missing 'acceleration:' section")
    missing = {"source", "offset", "lead_velocity"} - set(header)
    if missing:
        raise ValueError(f"{path}: missing header fields {sorted(missing)}")
    opt = lambda k: None if header.get(k, "none") == "none" else float(header[k])
    try:
        accel = np.array([float(x) for x in text[i + 1 :] if x.strip()])
    except ValueError as exc:
        raise ValueError(f"{path}: bad acceleration value ({exc})") from None
    return Scenario(
        offset=float(header["offset"]),
        lead_velocity=float(header["lead_velocity"]),
        lead_accel=accel,
        ego_velocity=opt("ego_velocity"),
        source=header["source"],
        robustness=opt("robustness"),
    )


def write_scenarios(scenarios: Sequence[Scenario], directory, prefix: str = "scenario") -> List[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, sc in enumerate(scenarios):
        p = d / f"{prefix}_{k:05d}.txt"
        write_scenario(sc, p)
        paths.append(p)
    return paths


def read_scenarios(directory) -> List[Scenario]:
    return [read_scenario(p) for p in sorted(Path(directory).glob("*.txt"))]


# --------------------------------------------------------------------------
# Closed-loop rollouts

Controller = Callable[[np.ndarray], np.ndarray]
TRACE_FIELDS = ("gap", "v_ego", "v_lead", "a_ego", "a_lead", "x_ego", "x_lead")


@dataclass
class Episode:
    scenario: Scenario
    trace: Trace
    cause: str
    length: int
    reward_ba: float
    reward_acc: float
    safe_distance_violations: int

    @property
    def collision(self) -> bool:
        return self.cause == "collision"

    @property
    def reverse(self) -> bool:
        return self.cause == "reverse"


def rollout(
    controller: Controller,
    scenarios: Sequence[Scenario],
    cfg: SimConfig = SimConfig(),
    rng: Optional[np.random.Generator] = None,
) -> List[Episode]:
    """Run ``controller`` (observations -> accelerations) on every scenario in lockstep."""
    n = len(scenarios)
    if n == 0:
        return []
    env = DrivingEnv(cfg, n)
    obs = env.reset(scenarios, rng)
    s = env.state
    rec = {k: np.zeros((cfg.max_steps + 1, n)) for k in TRACE_FIELDS}

    def record(t, idx):
        for k in TRACE_FIELDS:
            src = s.gap if k == "gap" else getattr(s, k)
            rec[k][t, idx] = src[idx]

    everyone = np.arange(n)
    record(0, everyone)
    r_ba = np.zeros(n)
    r_acc = np.zeros(n)
    violations = np.zeros(n, dtype=int)
    t = 0
    while np.any(s.cause == NONE):
        running = np.flatnonzero(s.cause == NONE)
        obs, _ = env.step(controller(obs))
        t += 1
        record(t, running)
        r_ba[running] += reward_ba(s)[running]
        r_acc[running] += reward_acc(s, cfg)[running]
        sd = np.atleast_1d(safe_distance(s.v_ego, s.v_lead, cfg))
        violations[running] += (s.gap < sd)[running]
    episodes = []
    for i, sc in enumerate(scenarios):
        length = int(s.steps[i])
        trace = Trace(cfg.dt, {k: rec[k][: length + 1, i] for k in TRACE_FIELDS})
        episodes.append(
            Episode(sc, trace, CAUSES[s.cause[i]], length, float(r_ba[i]), float(r_acc[i]), int(violations[i]))
        )
    return episodes


def constant_velocity_controller(obs: np.ndarray) -> np.ndarray:
    """Ego that ignores the leader and never accelerates."""
    return np.zeros(len(obs))


def full_brake_controller(cfg: SimConfig = SimConfig()) -> Controller:
    return lambda obs: np.full(len(obs), -cfg.a_max)


def _stopping_distance(v: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Distance covered under full braking in the discrete-time model (v floored at 0)."""
    step = cfg.a_max * cfg.dt
    m = np.floor(np.maximum(v, 0.0) / step)
    return cfg.dt * (m * v - step * m * (m + 1) / 2)


def braking_oracle_controller(cfg: SimConfig = SimConfig(), margin: float = 0.1, n_grid: int = 81) -> Controller:
    """Controller that provably never collides and never reverses.

    It keeps the invariant ``gap + D(v_lead) - D(v_ego) > 0`` and ``gap > 0``,
    where ``D`` is the discrete full-braking stopping distance: an action is
    admissible if the invariant still holds one step ahead when the leader
    brakes fully.  The largest admissible action on a grid is applied; if none
    qualifies it brakes fully (to standstill, never below zero).  Full braking
    preserves the invariant against any leader input in ``[-a_max, a_max]``,
    and reset places the leader at least a safe distance ahead, which
    establishes it.
    """
    grid = np.linspace(-cfg.a_max, cfg.a_max, n_grid)
    dt = cfg.dt

    def act(obs: np.ndarray) -> np.ndarray:
        gap, dv, v_e = obs[:, 0], obs[:, 1], obs[:, 2]
        v_l = v_e - dv
        v_l_next = np.maximum(0.0, v_l - cfg.a_max * dt)[:, None]
        v_e_next = v_e[:, None] + grid[None, :] * dt
        gap_next = gap[:, None] + (v_l_next - v_e_next) * dt
        slack = gap_next + _stopping_distance(v_l_next, cfg) - _stopping_distance(v_e_next, cfg)
        ok = (v_e_next >= 0) & (gap_next > margin) & (slack > margin)
        best = np.where(ok, grid[None, :], -np.inf).max(axis=1)
        brake = -np.minimum(cfg.a_max, v_e / dt)
        # rounding may push v below zero when braking to standstill
        brake = np.where(v_e + brake * dt < 0, brake * (1 - 1e-12), brake)
        brake = np.where(v_e + brake * dt < 0, 0.0, brake)
        return np.where(np.isfinite(best), best, brake)

    return act
