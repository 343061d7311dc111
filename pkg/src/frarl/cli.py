"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import data, sim
from .config import ConfigError, build_config, dump_config, load_config
from .evaluation import (
    compare_methods,
    emit_learning_curves,
    evaluate,
    read_log,
    render_table,
    write_comparison,
    write_episode_log,
)
from .falsify import CeConfig, falsify, uniform_falsify, write_report
from .mtl import MTLError
from .policy import deterministic_controller, load_checkpoint
from .safety import DrivingSystem, decode_candidate, driving_predicates, driving_search_space
from .mtl import parse_formula
from .trainers import TRAINERS

log = logging.getLogger("frarl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pairs(items: Sequence[str]) -> Dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _scenarios(directory) -> List[sim.Scenario]:
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory of scenario files")
    return sim.read_scenarios(directory)


# --------------------------------------------------------------------------
# Subcommands


def cmd_gen_data(args) -> None:
    trajs = data.generate_synthetic_dataset(
        args.n, np.random.default_rng(args.seed), args.out, lane_change_fraction=args.lane_change_fraction
    )
    print(f"wrote {args.out}: {args.n} vehicles, {len(trajs)} lane-following")


def cmd_preprocess(args) -> None:
    trajs = data.load_trajectories(args.input)
    split = data.preprocess(trajs, np.random.default_rng(args.seed), train_fraction=args.train_fraction)
    out = Path(args.out)
    sim.write_scenarios(split.train, out / "train")
    sim.write_scenarios(split.test, out / "test")
    randoms = sim.random_scenarios(args.random_test, args.random_seed)
    sim.write_scenarios(randoms, out / "random-test")
    print(
        f"{len(trajs)} trajectories -> {len(split.train)} train, {len(split.test)} test; "
        f"{len(randoms)} random test scenarios in {out}"
    )


def cmd_train(args) -> None:
    overrides = _pairs(args.set)
    overrides.update({"method": args.method, "task": args.task, "seed": str(args.seed)})
    cfg = load_config(args.config, overrides) if args.config else build_config(overrides)
    pool = _scenarios(Path(args.data) / "train")
    eval_set = _scenarios(args.eval_set) if args.eval_set else None
    run_dir = Path(args.run_dir) if args.run_dir else Path("runs") / f"{cfg.method}-{cfg.task}-seed{cfg.seed}"
    res = TRAINERS[cfg.method](cfg, pool, run_dir=run_dir, eval_scenarios=eval_set, resume=args.resume)
    print(f"trained {cfg.method} for {res.steps} steps ({res.iterations} iterations) -> {run_dir}")
    if res.converged:
        print("stopped early: falsifier found no violation in consecutive calls")


def cmd_falsify(args) -> None:
    cfg = sim.SimConfig()
    spec_text = Path(args.spec).read_text().strip()
    formula = parse_formula(spec_text, driving_predicates(cfg))
    params = load_checkpoint(args.checkpoint).params
    system = DrivingSystem(deterministic_controller(params), cfg, args.control_points)
    space = driving_search_space(cfg, args.control_points)
    ce = CeConfig(n_samples=args.samples, iterations=None if args.iterations == 0 else args.iterations,
                  min_falsified=args.n_best)
    rng = np.random.default_rng(args.seed)
    search = uniform_falsify if args.uniform else falsify
    if args.uniform:
        res = search(system, formula, space, args.budget, rng, ce)
    else:
        res = search(system, formula, space, args.budget, ce, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(res, space, out / "report.csv")
    found = []
    for cand, rob in res.best(args.n_best):
        sc = decode_candidate(cand, cfg, args.control_points)
        sc.robustness = rob
        found.append(sc)
    sim.write_scenarios(found, out / "scenarios")
    status = "falsified" if res.falsified else "not falsified"
    print(f"{status}: best robustness {res.best_robustness:.6g} after {res.simulations_used} simulations")


def cmd_evaluate(args) -> None:
    scenarios = _scenarios(args.scenarios)
    rep = evaluate(args.checkpoint, scenarios, args.task, scenario_set=Path(args.scenarios).name)
    if args.out:
        write_episode_log(rep, args.out)
    row = rep.row()
    print(",".join(row))
    print(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row.values()))


def _run_info(run_dir: Path) -> Dict[str, str]:
    cfg_path = run_dir / "config.txt"
    if not cfg_path.exists():
        raise UsageError(f"{run_dir} has no config.txt")
    cfg = load_config(cfg_path)
    return {"method": cfg.method, "task": cfg.task}


def cmd_compare(args) -> None:
    runs: Dict[str, list] = {}
    for d in map(Path, args.runs):
        info = _run_info(d)
        ckpt = d / "checkpoints" / "final.ckpt"
        if not ckpt.exists():
            log.warning("%s has no final checkpoint; skipped", d)
            continue
        runs.setdefault(info["method"], []).append((info["task"], ckpt))
    test_sets = {name: _scenarios(path) for name, path in _pairs(args.test_set).items()}
    if not test_sets:
        raise UsageError("give at least one --test-set NAME=DIR")
    tasks = args.tasks.split(",")
    cmp = compare_methods(runs, test_sets, tasks=tasks)
    print(render_table(cmp), end="")
    if args.out:
        write_comparison(cmp, args.out)


def cmd_curves(args) -> None:
    logs: Dict[str, list] = {}
    for d in map(Path, args.runs):
        info = _run_info(d)
        path = d / args.log
        if not path.exists():
            raise UsageError(f"{path} does not exist")
        logs.setdefault(info["method"], []).append(read_log(path))
    written = emit_learning_curves(logs, args.out, args.window)
    for p in written:
        print(p)


def cmd_config(args) -> None:
    cfg = load_config(args.config) if args.config else build_config({})
    sys.stdout.write(dump_config(cfg))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="frarl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic trajectory file")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lane-change-fraction", type=float, default=0.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("preprocess", help="split trajectories into train/test scenario directories")
    g.add_argument("--input", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--train-fraction", type=float, default=0.7)
    g.add_argument("--random-test", type=int, default=500, help="number of random test scenarios")
    g.add_argument("--random-seed", type=int, default=12345)
    g.set_defaults(func=cmd_preprocess)

    g = sub.add_parser("train", help="train a policy")
    g.add_argument("--method", choices=sorted(TRAINERS), required=True)
    g.add_argument("--task", choices=("ba", "acc"), default="ba")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", help="key = value file; see the 'config' subcommand for all keys")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    g.add_argument("--data", required=True, help="directory written by 'preprocess'")
    g.add_argument("--eval-set", help="scenario directory evaluated during training")
    g.add_argument("--run-dir")
    g.add_argument("--resume", help="checkpoint to continue from")
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("falsify", help="search scenarios that violate an MTL formula")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--spec", required=True, help="file holding one formula over collision and reverse")
    g.add_argument("--budget", type=int, default=2000)
    g.add_argument("--samples", type=int, default=50)
    g.add_argument("--iterations", type=int, default=0, help="0: limited by the budget only")
    g.add_argument("--control-points", type=int, default=10)
    g.add_argument("--n-best", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--uniform", action="store_true", help="uniform sampling baseline")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_falsify)

    g = sub.add_parser("evaluate", help="deterministic rollouts of a checkpoint")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--scenarios", required=True)
    g.add_argument("--task", choices=("ba", "acc"), default="ba")
    g.add_argument("--out", help="per-episode log file")
    g.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("compare", help="table of unsafe-behaviour rates per method")
    g.add_argument("--runs", nargs="+", required=True)
    g.add_argument("--test-set", action="append", default=[], metavar="NAME=DIR")
    g.add_argument("--tasks", default="ba,acc")
    g.add_argument("--out")
    g.set_defaults(func=cmd_compare)

    g = sub.add_parser("curves", help="mean and std learning curves across seeds")
    g.add_argument("--runs", nargs="+", required=True)
    g.add_argument("--log", default="eval.csv", help="log file inside each run directory")
    g.add_argument("--window", type=int, default=10)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_curves)

    g = sub.add_parser("config", help="print every configuration key with its value")
    g.add_argument("--config")
    g.set_defaults(func=cmd_config)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError, MTLError) as exc:
        print(f"frarl {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"frarl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
