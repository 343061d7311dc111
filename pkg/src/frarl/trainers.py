"""Training loops: plain PPO, adversary-network RARL and falsification-based RARL.

All three share one PPO iteration: ``n_actors`` environments advance
``steps_per_actor`` steps with the stochastic protagonist, advantages are
estimated and the clipped objective is optimized.  They differ only in where
the scenarios come from once the warm-up is over:

* ``ppo``   keeps drawing dataset scenarios;
* ``rarl``  lets a second policy drive the leading vehicle in a fraction of
  the episodes and trains it on the negated protagonist reward;
* ``frarl`` periodically falsifies the deterministic protagonist and mixes
  the least robust scenarios found into the pool.

Only protagonist steps count toward ``total_steps``.
"""

from __future__ import annotations

import csv
import logging
import math
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .evaluation import evaluate
from .falsify import CeConfig, falsify, write_report
from .policy import (
    AdamState,
    NonFiniteLossError,
    PolicyParams,
    PpoConfig,
    RolloutBatch,
    act,
    compute_gae,
    deterministic_controller,
    forward,
    init_params,
    load_checkpoint,
    ppo_update,
    save_checkpoint,
)
from .safety import DrivingSystem, decode_candidate, driving_search_space, safety_formula
from .sim import (
    COLLISION,
    REVERSE,
    DrivingEnv,
    Scenario,
    SimConfig,
    adversary_reward,
    read_scenarios,
    safe_distance,
    task_reward,
    write_scenarios,
)
from .mtl import Formula

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration", "step", "phase", "episodes", "mean_reward", "collisions", "reverses",
    "sd_violation_steps", "loss", "policy_loss", "value_loss", "clip_fraction", "approx_kl",
    "pool_falsified",
)
EVAL_COLUMNS = ("step", "scenarios", "collision_rate", "reverse_rate", "mean_reward", "sd_violation_steps")
ADVERSARY_COLUMNS = ("update", "step", "episodes", "mean_adversary_reward", "policy_loss", "value_loss")


@dataclass
class TrainConfig:
    method: str = "ppo"
    task: str = "ba"
    seed: int = 0
    total_steps: int = 300_000
    # protagonist-only steps before any adversary or falsifier is involved
    warmup_steps: int = 200_000
    falsify_every: int = 10
    falsify_traces: int = 10
    falsify_budget: int = 1000
    n_control: int = 10
    falsified_mix: float = 0.5
    adversary_mix: float = 0.5
    protagonist_iters: int = 10
    adversary_iters: int = 1
    # stop after this many consecutive falsifier calls without a violation
    converge_patience: int = 3
    eval_every: int = 10
    checkpoint_every: int = 10
    # "constant" or "linear" (decays to zero at total_steps)
    lr_schedule: str = "constant"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    ce: CeConfig = field(default_factory=CeConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.method not in ("ppo", "rarl", "frarl"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.task not in ("ba", "acc"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.total_steps < self.batch_steps:
            raise ValueError(
                f"total_steps {self.total_steps} is smaller than one iteration ({self.batch_steps} steps)"
            )
        if self.method != "ppo" and not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("warmup_steps must be below total_steps")
        for name in ("falsify_every", "falsify_traces", "protagonist_iters", "adversary_iters",
                     "converge_patience", "eval_every", "checkpoint_every", "n_control"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        for name in ("falsified_mix", "adversary_mix"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")

    @property
    def batch_steps(self) -> int:
        return self.ppo.n_actors * self.ppo.steps_per_actor

    @property
    def iterations(self) -> int:
        return self.total_steps // self.batch_steps

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# Scenario pool


class ScenarioPool:
    """Dataset scenarios plus falsified ones added during training.

    ``draw`` returns a scenario and whether the adversary network drives the
    leader in that episode.  The modes are ``"dataset"`` (warm-up and plain
    PPO), ``"falsified"`` (mix in falsified scenarios), ``"mixed-adversary"``
    (let the adversary drive a fraction of episodes) and ``"adversary"``
    (adversary drives every episode).
    """

    def __init__(self, dataset: Sequence[Scenario], falsified_mix: float = 0.5, adversary_mix: float = 0.5):
        if len(dataset) == 0:
            raise ValueError("scenario pool needs at least one dataset scenario")
        self.dataset = list(dataset)
        self.falsified: List[Scenario] = []
        self.falsified_mix = falsified_mix
        self.adversary_mix = adversary_mix

    def add_falsified(self, scenarios: Sequence[Scenario]) -> None:
        for sc in scenarios:
            if sc.source != "falsified" or sc.robustness is None:
                raise ValueError("falsified pool entries need the falsified tag and a robustness value")
        self.falsified.extend(scenarios)

    @staticmethod
    def near_miss(sc: Scenario) -> bool:
        """Admitted as one of the least robust candidates without violating the safety formula."""
        return sc.robustness is not None and sc.robustness >= 0

    def _dataset(self, rng) -> Scenario:
        return self.dataset[int(rng.integers(len(self.dataset)))]

    def draw(self, rng: np.random.Generator, mode: str = "dataset"):
        if mode == "dataset":
            return self._dataset(rng), False
        if mode == "falsified":
            if self.falsified and rng.random() < self.falsified_mix:
                return self.falsified[int(rng.integers(len(self.falsified)))], False
            return self._dataset(rng), False
        if mode == "mixed-adversary":
            driven = bool(rng.random() < self.adversary_mix)
            return self._dataset(rng), driven
        if mode == "adversary":
            return self._dataset(rng), True
        raise ValueError(f"unknown draw mode {mode!r}")


# --------------------------------------------------------------------------
# Rollout collection


@dataclass
class Collected:
    batch: RolloutBatch
    adversary_batch: Optional[RolloutBatch]
    episodes: int
    returns: List[float]
    adversary_returns: List[float]
    collisions: int
    reverses: int
    sd_violation_steps: int


def _finish_batch(obs, actions, logp, rewards, values, dones, last_value, cfg: PpoConfig) -> RolloutBatch:
    adv, ret = compute_gae(rewards, values, dones, last_value, cfg.gamma, cfg.lam)
    flat = lambda a: a.reshape(-1, *a.shape[2:])
    return RolloutBatch(
        obs=flat(obs), actions=flat(actions), logp=flat(logp), advantages=flat(adv),
        returns=flat(ret), rewards=flat(rewards), values=flat(values), dones=flat(dones),
    )


class Collector:
    """Actor environments whose episodes continue across iterations."""

    def __init__(self, cfg: TrainConfig, pool: ScenarioPool, rng: np.random.Generator):
        self.cfg = cfg
        self.pool = pool
        self.rng = rng
        self.n = cfg.ppo.n_actors
        self.env = DrivingEnv(cfg.sim, self.n)
        self.mode = "dataset"
        self.driven = np.zeros(self.n, dtype=bool)
        self.ep_return = np.zeros(self.n)
        self.started = False

    def _reset(self, idx) -> None:
        for i in np.atleast_1d(idx):
            sc, driven = self.pool.draw(self.rng, self.mode)
            self.env.reset_at(i, [sc], self.rng)
            self.driven[i] = driven
            self.ep_return[i] = 0.0

    def set_mode(self, mode: str, restart: bool = False) -> None:
        self.mode = mode
        if restart or not self.started:
            self._reset(np.arange(self.n))
            self.started = True

    def collect(
        self,
        protagonist: PolicyParams,
        rng: np.random.Generator,
        adversary: Optional[PolicyParams] = None,
        adversary_rng: Optional[np.random.Generator] = None,
    ) -> Collected:
        if not self.started:
            self.set_mode(self.mode)
        cfg, T, n = self.cfg, self.cfg.ppo.steps_per_actor, self.n
        shape = (T, n)
        obs_buf = np.zeros(shape + (5,))
        act_buf, logp_buf, val_buf = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        rew_buf, done_buf = np.zeros(shape), np.zeros(shape)
        adv_act, adv_logp, adv_val = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        returns: List[float] = []
        adv_returns: List[float] = []
        collisions = reverses = violations = 0
        obs = self.env.observe()
        for t in range(T):
            a, logp, v = act(protagonist, obs, rng)
            lead = None
            if adversary is not None and np.any(self.driven):
                la, llogp, lv = act(adversary, obs, adversary_rng)
                lead = np.where(self.driven, la, np.nan)
                adv_act[t], adv_logp[t], adv_val[t] = la, llogp, lv
            obs_buf[t], act_buf[t], logp_buf[t], val_buf[t] = obs, a, logp, v
            obs, done = self.env.step(a, lead)
            s = self.env.state
            r = task_reward(cfg.task, s, cfg.sim)
            rew_buf[t] = r
            done_buf[t] = done
            self.ep_return += r
            violations += int(np.count_nonzero(s.gap < safe_distance(s.v_ego, s.v_lead, cfg.sim)))
            if np.any(done):
                idx = np.flatnonzero(done)
                for i in idx:
                    (adv_returns if self.driven[i] else returns).append(float(self.ep_return[i]))
                collisions += int(np.count_nonzero(s.cause[idx] == COLLISION))
                reverses += int(np.count_nonzero(s.cause[idx] == REVERSE))
                self._reset(idx)
                obs = self.env.observe()
        last_v = forward(protagonist, obs)[1]
        batch = _finish_batch(obs_buf, act_buf, logp_buf, rew_buf, val_buf, done_buf, last_v, cfg.ppo)
        adv_batch = None
        if adversary is not None and np.all(self.driven) and self.mode == "adversary":
            last_adv = forward(adversary, obs)[1]
            adv_batch = _finish_batch(
                obs_buf, adv_act, adv_logp, adversary_reward(rew_buf), adv_val, done_buf, last_adv, cfg.ppo
            )
        return Collected(
            batch, adv_batch, len(returns) + len(adv_returns), returns, adv_returns,
            collisions, reverses, violations,
        )


# --------------------------------------------------------------------------
# Run directory


class RunDir:
    """Files of one training run: config, logs, checkpoints, falsified scenarios."""

    def __init__(self, path):
        self.path = Path(path)
        self.checkpoints = self.path / "checkpoints"
        self.falsified = self.path / "falsified"

    def create(self, cfg: TrainConfig, overwrite: bool = True) -> None:
        if overwrite and self.path.exists():
            for sub in ("checkpoints", "falsified"):
                shutil.rmtree(self.path / sub, ignore_errors=True)
            for name in ("metrics.csv", "eval.csv", "adversary.csv", "falsification.csv"):
                (self.path / name).unlink(missing_ok=True)
        self.checkpoints.mkdir(parents=True, exist_ok=True)
        self.falsified.mkdir(parents=True, exist_ok=True)
        from .config import dump_config

        (self.path / "config.txt").write_text(dump_config(cfg))

    def log_path(self, name: str) -> Path:
        return self.path / name

    def append(self, name: str, columns: Sequence[str], row: dict) -> None:
        path = self.path / name
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(columns)
            w.writerow([_fmt(row.get(c, "")) for c in columns])

    def truncate(self, name: str, max_step: int, key: str = "step") -> None:
        """Drop rows logged after ``max_step`` (used when resuming)."""
        path = self.path / name
        if not path.exists():
            return
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            return
        k = rows[0].index(key)
        kept = [rows[0]] + [r for r in rows[1:] if int(r[k]) <= max_step]
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(kept)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


# --------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    params: PolicyParams
    adversary: Optional[PolicyParams]
    metrics: List[dict]
    falsification: List[dict]
    steps: int
    iterations: int
    converged: bool
    run_dir: Optional[Path]


class Trainer:
    """Shared state machine behind :func:`train_ppo`, :func:`train_rarl` and :func:`train_frarl`."""

    STREAMS = ("init", "scenario", "action", "update", "falsify", "adversary_init",
               "adversary_action", "adversary_update")

    def __init__(
        self,
        cfg: TrainConfig,
        dataset: Sequence[Scenario],
        run_dir=None,
        eval_scenarios: Optional[Sequence[Scenario]] = None,
        formula: Optional[Formula] = None,
    ):
        self.cfg = cfg
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(self.STREAMS))
        self.rng = {name: np.random.default_rng(s) for name, s in zip(self.STREAMS, seqs)}
        self.pool = ScenarioPool(dataset, cfg.falsified_mix, cfg.adversary_mix)
        self.collector = Collector(cfg, self.pool, self.rng["scenario"])
        self.params = init_params(self.rng["init"], log_std=cfg.ppo.init_log_std)
        self.opt = AdamState.for_params(self.params)
        self.adversary: Optional[PolicyParams] = None
        self.adv_opt: Optional[AdamState] = None
        if cfg.method == "rarl":
            self.adversary = init_params(self.rng["adversary_init"], log_std=cfg.ppo.init_log_std)
            self.adv_opt = AdamState.for_params(self.adversary)
        self.formula = formula if formula is not None else safety_formula(cfg.sim)
        self.space = driving_search_space(cfg.sim, cfg.n_control)
        self.eval_scenarios = list(eval_scenarios) if eval_scenarios else []
        self.run = RunDir(run_dir) if run_dir is not None else None
        self.iteration = 0
        self.step = 0
        self.adversary_updates = 0
        self.falsify_calls = 0
        self.calls_without_violation = 0
        self.converged = False
        self.warmup_saved = False
        self.metrics: List[dict] = []
        self.falsification: List[dict] = []

    # -- phases --------------------------------------------------------

    def in_warmup(self) -> bool:
        return self.cfg.method == "ppo" or self.step < self.cfg.warmup_steps

    def post_warmup_iteration(self) -> int:
        """Index of the current iteration counted from the end of the warm-up."""
        return self.iteration - math.ceil(self.cfg.warmup_steps / self.cfg.batch_steps)

    # -- persistence ---------------------------------------------------

    def _meta(self) -> dict:
        return {
            "method": self.cfg.method,
            "task": self.cfg.task,
            "seed": self.cfg.seed,
            "iteration": self.iteration,
            "step": self.step,
            "adversary_updates": self.adversary_updates,
            "falsify_calls": self.falsify_calls,
            "calls_without_violation": self.calls_without_violation,
            "warmup_saved": self.warmup_saved,
            "rng": {k: _rng_state(r) for k, r in self.rng.items()},
        }

    def save(self, name: str) -> Optional[Path]:
        if self.run is None:
            return None
        path = self.run.checkpoints / f"{name}.ckpt"
        save_checkpoint(path, self.params, self.opt, self._meta())
        if self.adversary is not None:
            save_checkpoint(self.run.checkpoints / f"{name}.adversary.ckpt", self.adversary, self.adv_opt,
                            {"role": "adversary", "step": self.step})
        return path

    def resume(self, checkpoint) -> None:
        """Continue from ``checkpoint``; logs are truncated to its step."""
        ck = load_checkpoint(checkpoint)
        meta = ck.meta
        if meta.get("method") != self.cfg.method:
            raise ValueError(f"checkpoint was written by method {meta.get('method')!r}")
        self.params = ck.params
        self.opt = ck.opt or AdamState.for_params(self.params)
        for key in ("iteration", "step", "adversary_updates", "falsify_calls", "calls_without_violation",
                    "warmup_saved"):
            setattr(self, key, meta[key])
        for k, state in meta["rng"].items():
            _set_rng_state(self.rng[k], state)
        if self.adversary is not None:
            adv = load_checkpoint(Path(checkpoint).with_suffix(".adversary.ckpt"))
            self.adversary, self.adv_opt = adv.params, adv.opt
        if self.run is not None:
            for name in ("metrics.csv", "eval.csv", "adversary.csv"):
                self.run.truncate(name, self.step)
            self.run.truncate("falsification.csv", self.falsify_calls, key="call")
            calls = sorted(p for p in self.run.falsified.glob("call_*") if p.is_dir())
            for d in calls:
                if int(d.name.split("_")[1]) <= self.falsify_calls:
                    self.pool.add_falsified(read_scenarios(d))
        self.collector.started = False

    # -- steps ---------------------------------------------------------

    def _protagonist_iteration(self, mode: str) -> dict:
        cfg = self.cfg
        if self.collector.mode != mode:
            self.collector.set_mode(mode)
        col = self.collector.collect(
            self.params, self.rng["action"], self.adversary if mode == "mixed-adversary" else None,
            self.rng["adversary_action"],
        )
        try:
            self.params, stats = ppo_update(
                self.params, self.opt, col.batch, cfg.ppo, self.rng["update"], self.learning_rate()
            )
        except NonFiniteLossError:
            self.save("aborted")
            raise
        self.iteration += 1
        self.step += cfg.batch_steps
        rets = col.returns + col.adversary_returns
        row = {
            "iteration": self.iteration,
            "step": self.step,
            "episodes": col.episodes,
            "mean_reward": float(np.mean(rets)) if rets else math.nan,
            "collisions": col.collisions,
            "reverses": col.reverses,
            "sd_violation_steps": col.sd_violation_steps,
            "pool_falsified": len(self.pool.falsified),
        }
        row.update(stats)
        return row

    def learning_rate(self) -> float:
        lr = self.cfg.ppo.learning_rate
        if self.cfg.lr_schedule == "linear":
            lr *= 1.0 - self.iteration / self.cfg.iterations
        return lr

    def _adversary_iteration(self) -> None:
        self.collector.set_mode("adversary", restart=True)
        col = self.collector.collect(
            self.params, self.rng["action"], self.adversary, self.rng["adversary_action"]
        )
        self.adversary, stats = ppo_update(
            self.adversary, self.adv_opt, col.adversary_batch, self.cfg.ppo, self.rng["adversary_update"],
            self.learning_rate(),
        )
        self.adversary_updates += 1
        row = {
            "update": self.adversary_updates,
            "step": self.step,
            "episodes": col.episodes,
            "mean_adversary_reward": (
                float(np.mean([-r for r in col.adversary_returns])) if col.adversary_returns else math.nan
            ),
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
        }
        if self.run is not None:
            self.run.append("adversary.csv", ADVERSARY_COLUMNS, row)
        self.collector.set_mode("mixed-adversary", restart=True)

    def _falsify(self) -> None:
        cfg = self.cfg
        self.falsify_calls += 1
        k = self.falsify_calls
        ce = CeConfig(**{**asdict(cfg.ce), "min_falsified": cfg.falsify_traces})
        system = DrivingSystem(deterministic_controller(self.params), cfg.sim, cfg.n_control)
        try:
            res = falsify(system, self.formula, self.space, cfg.falsify_budget, ce, self.rng["falsify"])
        except Exception as exc:  # keep training on the existing pool
            log.warning("falsification call %d failed: %s", k, exc)
            self.falsification.append({"call": k, "step": self.step, "error": str(exc)})
            return
        found = []
        for cand, rob in res.best(cfg.falsify_traces):
            sc = decode_candidate(cand, cfg.sim, cfg.n_control, source="falsified")
            sc.robustness = rob
            found.append(sc)
        self.pool.add_falsified(found)
        n_violating = int(np.count_nonzero(res.robustness < 0))
        if res.falsified:
            self.calls_without_violation = 0
        else:
            self.calls_without_violation += 1
        entry = {
            "call": k,
            "step": self.step,
            "best_robustness": res.best_robustness,
            "violations": n_violating,
            "simulations": res.simulations_used,
            "first_falsified_at": res.first_falsified_at if res.first_falsified_at is not None else "",
            "added": len(found),
            "near_misses": sum(ScenarioPool.near_miss(s) for s in found),
        }
        self.falsification.append(entry)
        log.info("falsification %d at step %d: best robustness %.4g, %d violations",
                 k, self.step, res.best_robustness, n_violating)
        if self.run is not None:
            d = self.run.falsified / f"call_{k:03d}"
            d.mkdir(parents=True, exist_ok=True)
            write_scenarios(found, d)
            write_report(res, self.space, d / "report.csv")
            save_checkpoint(d / "policy.ckpt", self.params, None, {"call": k, "step": self.step})
            self.run.append("falsification.csv", list(entry), entry)
        if self.calls_without_violation >= cfg.converge_patience:
            self.converged = True

    def _evaluate(self) -> None:
        if not self.eval_scenarios:
            return
        rep = evaluate(self.params, self.eval_scenarios, self.cfg.task, self.cfg.sim)
        row = {
            "step": self.step,
            "scenarios": rep.scenarios,
            "collision_rate": rep.collision_rate,
            "reverse_rate": rep.reverse_rate,
            "mean_reward": rep.mean_reward,
            "sd_violation_steps": rep.sd_violation_steps,
        }
        if self.run is not None:
            self.run.append("eval.csv", EVAL_COLUMNS, row)

    # -- main loop -----------------------------------------------------

    def train(self) -> TrainResult:
        cfg = self.cfg
        if self.run is not None and self.iteration == 0:
            self.run.create(cfg)
        if self.iteration == 0:
            self._evaluate()
        while self.iteration < cfg.iterations and not self.converged:
            if self.in_warmup():
                mode = "dataset"
            else:
                if not self.warmup_saved:
                    self.save("warmup")
                    self.warmup_saved = True
                j = self.post_warmup_iteration()
                if cfg.method == "frarl":
                    mode = "falsified"
                    if j % cfg.falsify_every == 0:
                        self._falsify()
                        if self.converged:
                            log.info("no violation in %d consecutive falsification calls; stopping",
                                     cfg.converge_patience)
                            break
                else:
                    mode = "mixed-adversary"
                    cycle = cfg.protagonist_iters
                    if j > 0 and j % cycle == 0:
                        for _ in range(cfg.adversary_iters):
                            self._adversary_iteration()
            row = {"phase": "warmup" if self.in_warmup() and cfg.method != "ppo" else "train"}
            row.update(self._protagonist_iteration(mode))
            self.metrics.append(row)
            if self.run is not None:
                self.run.append("metrics.csv", METRIC_COLUMNS, row)
            if self.iteration % cfg.eval_every == 0:
                self._evaluate()
            if self.iteration % cfg.checkpoint_every == 0:
                self.save(f"step_{self.step:08d}")
        if self.iteration % cfg.eval_every != 0:
            self._evaluate()
        self.save("final")
        return TrainResult(
            self.params, self.adversary, self.metrics, self.falsification, self.step, self.iteration,
            self.converged, self.run.path if self.run else None,
        )


def _train(method, cfg, dataset, run_dir, eval_scenarios, resume, formula=None) -> TrainResult:
    if cfg.method != method:
        cfg = TrainConfig(**{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__}, "method": method})
    trainer = Trainer(cfg, dataset, run_dir, eval_scenarios, formula)
    if resume is not None:
        trainer.resume(resume)
    return trainer.train()


def train_ppo(cfg: TrainConfig, dataset: Sequence[Scenario], run_dir=None,
              eval_scenarios: Optional[Sequence[Scenario]] = None, resume=None) -> TrainResult:
    """Plain PPO on dataset scenarios for ``cfg.total_steps`` steps."""
    return _train("ppo", cfg, dataset, run_dir, eval_scenarios, resume)


def train_rarl(cfg: TrainConfig, dataset: Sequence[Scenario], run_dir=None,
               eval_scenarios: Optional[Sequence[Scenario]] = None, resume=None) -> TrainResult:
    """Warm-up, then cycles of ``protagonist_iters`` protagonist and ``adversary_iters`` adversary updates."""
    return _train("rarl", cfg, dataset, run_dir, eval_scenarios, resume)


def train_frarl(cfg: TrainConfig, dataset: Sequence[Scenario], run_dir=None,
                eval_scenarios: Optional[Sequence[Scenario]] = None, resume=None,
                formula: Optional[Formula] = None) -> TrainResult:
    """Warm-up, then falsify every ``falsify_every`` iterations and train on the mixed pool."""
    return _train("frarl", cfg, dataset, run_dir, eval_scenarios, resume, formula)


TRAINERS: Dict[str, Callable[..., TrainResult]] = {"ppo": train_ppo, "rarl": train_rarl, "frarl": train_frarl}
