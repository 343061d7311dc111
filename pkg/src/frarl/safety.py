"""Safety formula of the driving task and its falsification wiring."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from .falsify import SearchSpace
from .mtl import Formula, Predicate, Trace, parse_formula
from .sim import Controller, Scenario, SimConfig, rollout

SAFETY_SPEC = "G (!collision & !reverse)"


def driving_predicates(cfg: SimConfig = SimConfig()) -> Dict[str, Predicate]:
    """``collision`` (gap <= 0) and ``reverse`` (v_ego < 0).

    Distances are divided by the width of the corresponding scenario range
    (lead offset for the gap, ego initial velocity for the speed) so that the
    minimum in the conjunction compares commensurable quantities.
    """
    gap_scale = cfg.offset_range[1] - cfg.offset_range[0]
    vel_scale = cfg.ego_velocity_range[1] - cfg.ego_velocity_range[0]
    return {
        "collision": Predicate(
            "collision", lambda r: -r["gap"] / gap_scale, member=lambda r: r["gap"] <= 0
        ),
        "reverse": Predicate(
            "reverse", lambda r: -r["v_ego"] / vel_scale, member=lambda r: r["v_ego"] < 0
        ),
    }


def safety_formula(cfg: SimConfig = SimConfig(), text: str = SAFETY_SPEC) -> Formula:
    return parse_formula(text, driving_predicates(cfg))


def driving_search_space(cfg: SimConfig = SimConfig(), n_control: int = 10) -> SearchSpace:
    """Lead offset, lead initial velocity, then ``n_control`` acceleration points."""
    names = ["offset", "lead_velocity"] + [f"accel_{k}" for k in range(n_control)]
    lower = [cfg.offset_range[0], cfg.lead_velocity_range[0]] + [-cfg.a_max] * n_control
    upper = [cfg.offset_range[1], cfg.lead_velocity_range[1]] + [cfg.a_max] * n_control
    return SearchSpace(tuple(names), np.array(lower), np.array(upper), n_control)


def control_steps(cfg: SimConfig, n_control: int) -> np.ndarray:
    if n_control == 1:
        return np.zeros(1, dtype=int)
    return np.round(np.linspace(0, cfg.max_steps - 1, n_control)).astype(int)


def decode_candidate(
    candidate, cfg: SimConfig = SimConfig(), n_control: int = 10, source: str = "falsified"
) -> Scenario:
    """Candidate vector -> scenario; control points are linearly interpolated.

    The ego starts at the leader's velocity, so the initial gap is the
    reaction-delay part of the safe distance plus the offset.
    """
    c = np.asarray(candidate, dtype=float)
    knots = control_steps(cfg, n_control)
    points = c[2 : 2 + n_control]
    if n_control == 1:
        accel = np.full(cfg.max_steps, points[0])
    else:
        accel = np.interp(np.arange(cfg.max_steps), knots, points)
    return Scenario(
        offset=float(c[0]),
        lead_velocity=float(c[1]),
        lead_accel=accel,
        ego_velocity=float(c[1]),
        source=source,
    )


def encode_scenario(sc: Scenario, cfg: SimConfig = SimConfig(), n_control: int = 10) -> np.ndarray:
    knots = control_steps(cfg, n_control)
    return np.concatenate([[sc.offset, sc.lead_velocity], sc.lead_accel[knots]])


class DrivingSystem:
    """Black box mapping a candidate to the closed-loop trace of ``controller``."""

    def __init__(self, controller: Controller, cfg: SimConfig = SimConfig(), n_control: int = 10):
        self.controller = controller
        self.cfg = cfg
        self.n_control = n_control

    def scenario(self, candidate) -> Scenario:
        return decode_candidate(candidate, self.cfg, self.n_control)

    def __call__(self, candidate) -> Trace:
        return self.batch(np.atleast_2d(candidate))[0]

    def batch(self, candidates) -> List[Trace]:
        scenarios = [self.scenario(c) for c in np.atleast_2d(candidates)]
        return [ep.trace for ep in rollout(self.controller, scenarios, self.cfg)]
