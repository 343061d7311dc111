"""Policy evaluation, method comparison tables and learning-curve export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .policy import PolicyParams, deterministic_controller, load_checkpoint
from .sim import Scenario, SimConfig, rollout

METHODS = ("ppo", "rarl", "frarl")
TASKS = ("ba", "acc")
SCENARIO_SETS = ("dataset-test", "random-test")
RATE_METRICS = ("reverse", "collision")

# Full-scale reference rates (real highway recordings, 28 037 test scenarios,
# 10 seeds per method).  They document the targets of the comparison design;
# desk-scale runs on synthetic data are not expected to reproduce them.
REFERENCE_RATES: Dict[Tuple[str, str, str, str], float] = {
    ("ppo", "ba", "dataset-test", "reverse"): 0.0034,
    ("ppo", "ba", "dataset-test", "collision"): 0.0459,
    ("rarl", "ba", "dataset-test", "reverse"): 0.00009,
    ("rarl", "ba", "dataset-test", "collision"): 0.0270,
    ("frarl", "ba", "dataset-test", "reverse"): 0.0,
    ("frarl", "ba", "dataset-test", "collision"): 0.00015,
    ("ppo", "acc", "dataset-test", "reverse"): 0.00005,
    ("ppo", "acc", "dataset-test", "collision"): 0.0024,
    ("rarl", "acc", "dataset-test", "reverse"): 0.0,
    ("rarl", "acc", "dataset-test", "collision"): 0.0017,
    ("frarl", "acc", "dataset-test", "reverse"): 0.0,
    ("frarl", "acc", "dataset-test", "collision"): 0.0,
    ("ppo", "ba", "random-test", "reverse"): 0.0040,
    ("ppo", "ba", "random-test", "collision"): 0.0605,
    ("rarl", "ba", "random-test", "reverse"): 0.00026,
    ("rarl", "ba", "random-test", "collision"): 0.0359,
    ("frarl", "ba", "random-test", "reverse"): 0.000018,
    ("frarl", "ba", "random-test", "collision"): 0.00025,
    ("ppo", "acc", "random-test", "reverse"): 0.00028,
    ("ppo", "acc", "random-test", "collision"): 0.0033,
    ("rarl", "acc", "random-test", "reverse"): 0.00013,
    ("rarl", "acc", "random-test", "collision"): 0.0026,
    ("frarl", "acc", "random-test", "reverse"): 0.0,
    ("frarl", "acc", "random-test", "collision"): 0.0,
}

PolicyLike = Union[str, Path, PolicyParams, Callable[[np.ndarray], np.ndarray]]


@dataclass
class EvalReport:
    """Aggregate of deterministic rollouts of one policy on one scenario set.

    ``episodes`` keeps the raw per-episode log (cause, reward, length,
    safe-distance violation steps) the rates are computed from.
    """

    task: str
    scenario_set: str
    scenarios: int
    collision_rate: float
    reverse_rate: float
    mean_reward: float
    sd_violation_steps: int
    method: str = ""
    seeds: int = 1
    episodes: List[dict] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {
            "method": self.method,
            "task": self.task,
            "scenario_set": self.scenario_set,
            "seeds": self.seeds,
            "scenarios": self.scenarios,
            "reverse_rate": self.reverse_rate,
            "collision_rate": self.collision_rate,
            "mean_reward": self.mean_reward,
            "sd_violation_steps": self.sd_violation_steps,
        }


def as_controller(policy: PolicyLike) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(policy, (str, Path)):
        policy = load_checkpoint(policy).params
    if isinstance(policy, PolicyParams):
        return deterministic_controller(policy)
    if callable(policy):
        return policy
    raise TypeError(f"cannot evaluate {type(policy).__name__}")


def evaluate(
    policy: PolicyLike,
    scenarios: Sequence[Scenario],
    task: str = "ba",
    cfg: SimConfig = SimConfig(),
    scenario_set: str = "",
    method: str = "",
) -> EvalReport:
    """Deterministic rollouts of ``policy`` on every scenario."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if len(scenarios) == 0:
        raise ValueError("cannot evaluate on an empty scenario set")
    controller = as_controller(policy)
    episodes = rollout(controller, scenarios, cfg)
    log = [
        {
            "cause": ep.cause,
            "reward": ep.reward_ba if task == "ba" else ep.reward_acc,
            "length": ep.length,
            "sd_violations": ep.safe_distance_violations,
        }
        for ep in episodes
    ]
    return report_from_log(log, task, scenario_set, method)


def report_from_log(log: Sequence[dict], task: str, scenario_set: str = "", method: str = "") -> EvalReport:
    n = len(log)
    return EvalReport(
        task=task,
        scenario_set=scenario_set,
        scenarios=n,
        collision_rate=sum(e["cause"] == "collision" for e in log) / n,
        reverse_rate=sum(e["cause"] == "reverse" for e in log) / n,
        mean_reward=float(np.mean([e["reward"] for e in log])),
        sd_violation_steps=int(sum(e["sd_violations"] for e in log)),
        method=method,
        episodes=list(log),
    )


def write_episode_log(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "cause", "reward", "length", "sd_violations"])
        for i, e in enumerate(report.episodes):
            w.writerow([i, e["cause"], repr(float(e["reward"])), e["length"], e["sd_violations"]])


def read_episode_log(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [
            {
                "cause": r["cause"],
                "reward": float(r["reward"]),
                "length": int(r["length"]),
                "sd_violations": int(r["sd_violations"]),
            }
            for r in csv.DictReader(fh)
        ]


# --------------------------------------------------------------------------
# Comparison across methods


@dataclass
class CellStats:
    mean: float
    std: float
    seeds: int
    scenarios: int


def aggregate(reports: Sequence[EvalReport]) -> Dict[str, CellStats]:
    """Mean and std over seeds of each rate."""
    out = {}
    for metric in RATE_METRICS:
        vals = np.array([getattr(r, f"{metric}_rate") for r in reports])
        out[metric] = CellStats(float(vals.mean()), float(vals.std()), len(vals), int(sum(r.scenarios for r in reports)))
    return out


@dataclass
class Comparison:
    methods: List[str]
    columns: List[Tuple[str, str, str]]  # (task, scenario set, metric)
    cells: Dict[Tuple[str, Tuple[str, str, str]], Optional[CellStats]]
    missing: Dict[Tuple[str, str, str], str]


def compare_methods(
    runs: Mapping[str, Sequence[Tuple[str, str]]],
    test_sets: Mapping[str, Sequence[Scenario]],
    cfg: SimConfig = SimConfig(),
    tasks: Sequence[str] = TASKS,
) -> Comparison:
    """Evaluate every run on every test set and aggregate per cell.

    ``runs`` maps a method name to ``(task, checkpoint path)`` pairs, one per
    seed.  Cells without a run for that method and task are reported missing.
    """
    methods = [m for m in METHODS if m in runs] + [m for m in runs if m not in METHODS]
    columns = [(t, s, m) for t in tasks for s in test_sets for m in RATE_METRICS]
    cells: Dict = {}
    missing: Dict = {}
    for method in methods:
        for task in tasks:
            ckpts = [p for t, p in runs[method] if t == task]
            for set_name, scenarios in test_sets.items():
                if not ckpts:
                    missing[(method, task, set_name)] = f"no {task} run for {method}"
                    for metric in RATE_METRICS:
                        cells[(method, (task, set_name, metric))] = None
                    continue
                reports = [evaluate(p, scenarios, task, cfg, set_name, method) for p in ckpts]
                for metric, stats in aggregate(reports).items():
                    cells[(method, (task, set_name, metric))] = stats
    return Comparison(methods, columns, cells, missing)


def _fmt_rate(x: float) -> str:
    return f"{100 * x:.3f}%"


def render_table(cmp: Comparison) -> str:
    """Plain-text table; the per-column minimum is wrapped in ``**``."""
    headers = ["method"] + [f"{t}/{s}/{m}" for t, s, m in cmp.columns]
    rows = []
    minima = {}
    for col in cmp.columns:
        vals = [cmp.cells[(m, col)].mean for m in cmp.methods if cmp.cells.get((m, col)) is not None]
        minima[col] = min(vals) if vals else None
    for m in cmp.methods:
        row = [m.upper()]
        for col in cmp.columns:
            c = cmp.cells.get((m, col))
            if c is None:
                row.append("missing")
                continue
            text = _fmt_rate(c.mean)
            if c.seeds > 1:
                text += f" ±{100 * c.std:.3f}"
            if c.mean == minima[col]:
                text = f"**{text}**"
            row.append(text)
        rows.append(row)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    for (m, t, s), why in sorted(cmp.missing.items()):
        lines.append(f"missing: {m.upper()} {t} {s}: {why}")
    return "\n".join(lines) + "\n"


def write_comparison(cmp: Comparison, path) -> None:
    """Delimited export with one row per method and cell, plus reference rates."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "task", "scenario_set", "metric", "mean", "std", "seeds", "scenarios", "reference"])
        for m in cmp.methods:
            for col in cmp.columns:
                c = cmp.cells.get((m, col))
                ref = REFERENCE_RATES.get((m,) + col)
                ref_s = "" if ref is None else repr(float(ref))
                if c is None:
                    w.writerow([m, *col, "missing", "", 0, 0, ref_s])
                else:
                    w.writerow([m, *col, repr(float(c.mean)), repr(float(c.std)), c.seeds, c.scenarios, ref_s])


# --------------------------------------------------------------------------
# Learning curves

CURVE_METRICS = {"reward": "mean_reward", "sd_violations": "sd_violation_steps"}


def read_log(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average that ignores NaN entries; window 1 is the identity."""
    if window < 1:
        raise ValueError("window must be at least 1")
    values = np.asarray(values, dtype=float)
    if window == 1:
        return values.copy()
    out = np.empty_like(values)
    for i in range(len(values)):
        seg = values[max(0, i - window + 1) : i + 1]
        seg = seg[~np.isnan(seg)]
        out[i] = seg.mean() if len(seg) else math.nan
    return out


def learning_curve(logs: Sequence[Sequence[dict]], column: str, window: int = 10):
    """(steps, mean, std) across seeds; rows are aligned on the step column."""
    if not logs:
        raise ValueError("no logs given")
    step_sets = [[int(r["step"]) for r in log] for log in logs]
    steps = sorted(set(step_sets[0]).intersection(*step_sets[1:]))
    curves = []
    for log in logs:
        by_step = {int(r["step"]): float(r[column]) if r[column] not in ("", None) else math.nan for r in log}
        curves.append(smooth(np.array([by_step[s] for s in steps]), window))
    stack = np.vstack(curves)
    return np.array(steps), stack.mean(axis=0), stack.std(axis=0)


def emit_learning_curves(
    logs_by_method: Mapping[str, Sequence[Sequence[dict]]],
    out_dir,
    window: int = 10,
    metrics: Mapping[str, str] = CURVE_METRICS,
) -> List[Path]:
    """Write ``<method>_<metric>.csv`` files with step, mean, std columns."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for method, logs in logs_by_method.items():
        for name, column in metrics.items():
            steps, mean, std = learning_curve(logs, column, window)
            path = out_dir / f"{method}_{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "mean", "std", "seeds"])
                for s, m, d in zip(steps, mean, std):
                    w.writerow([int(s), repr(float(m)), repr(float(d)), len(logs)])
            written.append(path)
    return written
