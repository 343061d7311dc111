import dataclasses

import numpy as np
import pytest

from frarl import trainers
from frarl.falsify import CeConfig
from frarl.mtl import TrueF, robustness
from frarl.policy import NonFiniteLossError, PolicyParams, PpoConfig, deterministic_controller, load_checkpoint
from frarl.safety import safety_formula
from frarl.sim import Scenario, SimConfig, random_scenarios, read_scenarios, rollout
from frarl.trainers import Collector, ScenarioPool, TrainConfig, Trainer, train_frarl, train_ppo, train_rarl

SIM = SimConfig()
BATCH = 128


def small_cfg(method="ppo", **kw):
    base = dict(
        method=method,
        total_steps=8 * BATCH,
        warmup_steps=4 * BATCH,
        falsify_budget=100,
        ppo=PpoConfig(n_actors=2, steps_per_actor=64, minibatch_size=64, epochs=2),
        ce=CeConfig(n_samples=20),
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def dataset():
    out = []
    for sc in random_scenarios(20, seed=3):
        out.append(dataclasses.replace(sc, source="dataset"))
    return out


def csv_bytes(run, name="metrics.csv"):
    return (run / name).read_bytes()


# --------------------------------------------------------------------------
# Config and pool


def test_config_validation():
    with pytest.raises(ValueError, match="warmup"):
        small_cfg("frarl", warmup_steps=8 * BATCH)
    with pytest.raises(ValueError, match="falsify_every"):
        small_cfg("frarl", falsify_every=0)
    with pytest.raises(ValueError, match="smaller than one iteration"):
        small_cfg(total_steps=BATCH - 1)
    with pytest.raises(ValueError):
        small_cfg(method="a3c")
    # plain PPO has no warm-up phase to validate
    assert small_cfg("ppo", warmup_steps=10**9).iterations == 8


def test_pool_requires_tagged_falsified(dataset):
    pool = ScenarioPool(dataset)
    with pytest.raises(ValueError):
        pool.add_falsified([dataset[0]])
    untagged_rob = dataclasses.replace(dataset[0], source="falsified")
    with pytest.raises(ValueError):
        pool.add_falsified([untagged_rob])
    with pytest.raises(ValueError):
        ScenarioPool([])


def test_pool_draw_modes(dataset):
    f = dataclasses.replace(dataset[0], source="falsified", robustness=0.3)
    assert ScenarioPool.near_miss(f)
    assert not ScenarioPool.near_miss(dataclasses.replace(f, robustness=-0.1))
    rng = np.random.default_rng(0)
    only_f = ScenarioPool(dataset, falsified_mix=1.0)
    # nothing falsified yet: falls back to the dataset
    assert only_f.draw(rng, "falsified")[0].source == "dataset"
    only_f.add_falsified([f])
    assert all(only_f.draw(rng, "falsified")[0] is f for _ in range(20))
    never = ScenarioPool(dataset, falsified_mix=0.0, adversary_mix=0.0)
    never.add_falsified([f])
    assert all(never.draw(rng, "falsified")[0].source == "dataset" for _ in range(20))
    assert not any(never.draw(rng, "mixed-adversary")[1] for _ in range(20))
    assert all(never.draw(rng, "adversary")[1] for _ in range(5))
    with pytest.raises(ValueError):
        never.draw(rng, "curriculum")


# --------------------------------------------------------------------------
# PPO


def test_one_batch_is_one_update(dataset, monkeypatch):
    calls = []
    real = trainers.ppo_update
    monkeypatch.setattr(trainers, "ppo_update", lambda *a, **k: calls.append(1) or real(*a, **k))
    res = train_ppo(small_cfg(total_steps=BATCH), dataset)
    assert len(calls) == 1
    assert res.iterations == 1 and res.steps == BATCH


def test_step_accounting_ignores_episode_boundaries(dataset):
    # total_steps not a multiple of the batch: the remainder is not run
    res = train_ppo(small_cfg(total_steps=5 * BATCH + 17), dataset)
    assert [r["step"] for r in res.metrics] == [BATCH * (i + 1) for i in range(5)]
    assert sum(r["episodes"] for r in res.metrics) > 0


def test_seeded_runs_have_identical_logs(dataset, tmp_path):
    for name in ("a", "b"):
        train_ppo(small_cfg(seed=5), dataset, run_dir=tmp_path / name, eval_scenarios=dataset[:4])
    assert csv_bytes(tmp_path / "a") == csv_bytes(tmp_path / "b")
    assert csv_bytes(tmp_path / "a", "eval.csv") == csv_bytes(tmp_path / "b", "eval.csv")
    assert (tmp_path / "a/checkpoints/final.ckpt").read_bytes() == (tmp_path / "b/checkpoints/final.ckpt").read_bytes()
    other = train_ppo(small_cfg(seed=6), dataset)
    first = train_ppo(small_cfg(seed=5), dataset)
    assert not other.params.equals(first.params)


def test_run_directory_layout(dataset, tmp_path):
    train_ppo(small_cfg(checkpoint_every=4), dataset, run_dir=tmp_path, eval_scenarios=dataset[:3])
    assert (tmp_path / "config.txt").read_text().startswith("method = ppo\n")
    names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert names == ["final.ckpt", "step_00000512.ckpt", "step_00001024.ckpt"]
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0].split(",")
    for col in ("step", "mean_reward", "collisions", "reverses", "sd_violation_steps"):
        assert col in header
    evals = (tmp_path / "eval.csv").read_text().splitlines()
    # initial evaluation plus one per eval_every iterations (here only the final one)
    assert [row.split(",")[0] for row in evals[1:]] == ["0", "1024"]


def test_non_finite_loss_aborts_with_checkpoint(dataset, tmp_path, monkeypatch):
    real = trainers.ppo_update
    calls = []

    def poisoned(params, *a, **k):
        calls.append(1)
        if len(calls) == 3:
            params = params.copy()
            params.tensors["w1"][:] = np.nan
        return real(params, *a, **k)

    monkeypatch.setattr(trainers, "ppo_update", poisoned)
    with pytest.raises(NonFiniteLossError):
        train_ppo(small_cfg(), dataset, run_dir=tmp_path)
    ck = load_checkpoint(tmp_path / "checkpoints/aborted.ckpt")
    assert ck.meta["iteration"] == 2 and ck.params.all_finite()


def test_resume_continues_step_axis(dataset, tmp_path):
    cfg = small_cfg(checkpoint_every=2)
    train_ppo(cfg, dataset, run_dir=tmp_path / "full")
    before = (tmp_path / "full/metrics.csv").read_text().splitlines()
    ckpt = tmp_path / "full/checkpoints/step_00000512.ckpt"
    res = train_ppo(cfg, dataset, run_dir=tmp_path / "full", resume=ckpt)
    after = (tmp_path / "full/metrics.csv").read_text().splitlines()
    steps = [int(line.split(",")[1]) for line in after[1:]]
    assert steps == [BATCH * (i + 1) for i in range(8)]
    assert after[:5] == before[:5]
    assert res.steps == 8 * BATCH
    # resuming is itself deterministic
    again = train_ppo(cfg, dataset, run_dir=tmp_path / "full", resume=ckpt)
    assert again.params.equals(res.params)


def test_resume_rejects_other_method(dataset, tmp_path):
    train_ppo(small_cfg(), dataset, run_dir=tmp_path)
    with pytest.raises(ValueError, match="method"):
        train_frarl(small_cfg("frarl"), dataset, resume=tmp_path / "checkpoints/final.ckpt")


# --------------------------------------------------------------------------
# Warm-up


def test_warmup_is_shared_by_all_methods(dataset, tmp_path):
    ppo_run = tmp_path / "ppo"
    train_ppo(small_cfg("ppo", checkpoint_every=1), dataset, run_dir=ppo_run)
    ref = load_checkpoint(ppo_run / "checkpoints/step_00000512.ckpt").params
    for method, fn in (("rarl", train_rarl), ("frarl", train_frarl)):
        run = tmp_path / method
        fn(small_cfg(method), dataset, run_dir=run)
        warm = load_checkpoint(run / "checkpoints/warmup.ckpt")
        assert warm.meta["step"] == 4 * BATCH
        for name, arr in ref.items():
            np.testing.assert_array_equal(warm.params[name], arr, err_msg=f"{method} {name}")


def test_frarl_inside_warmup_equals_ppo(dataset, tmp_path):
    cfg = small_cfg("frarl", warmup_steps=8 * BATCH - 1)
    f = train_frarl(cfg, dataset, run_dir=tmp_path / "f")
    p = train_ppo(small_cfg("ppo"), dataset, run_dir=tmp_path / "p")
    assert f.falsification == [] and f.params.equals(p.params)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "phase"} for r in rows]
    assert strip(f.metrics) == strip(p.metrics)


# --------------------------------------------------------------------------
# FRARL


@pytest.fixture(scope="module")
def frarl_run(dataset, tmp_path_factory):
    run = tmp_path_factory.mktemp("frarl")
    cfg = small_cfg("frarl", total_steps=6 * BATCH, warmup_steps=BATCH, falsify_every=2)
    trainer = Trainer(cfg, dataset, run)
    sizes = []
    real = trainer._falsify

    def spy():
        before = len(trainer.pool.falsified)
        real()
        sizes.append(len(trainer.pool.falsified) - before)

    trainer._falsify = spy
    res = trainer.train()
    return run, trainer, res, sizes


def test_each_falsification_adds_ten_tagged_scenarios(frarl_run):
    run, trainer, res, sizes = frarl_run
    # post-warm-up iterations 0, 2, 4 falsify
    assert sizes == [10, 10, 10]
    assert len(trainer.pool.falsified) == 30
    for sc in trainer.pool.falsified:
        assert sc.source == "falsified" and sc.robustness is not None
        assert sc.robustness < 0 or ScenarioPool.near_miss(sc)
    assert [e["call"] for e in res.falsification] == [1, 2, 3]
    assert [e["step"] for e in res.falsification] == [BATCH, 3 * BATCH, 5 * BATCH]
    assert len((run / "falsification.csv").read_text().splitlines()) == 4


def test_falsified_scenarios_replay(frarl_run):
    run, trainer, _, _ = frarl_run
    formula = safety_formula(SIM)
    for call in sorted((run / "falsified").iterdir()):
        params = load_checkpoint(call / "policy.ckpt").params
        stored = read_scenarios(call)
        assert len(stored) == 10
        eps = rollout(deterministic_controller(params), stored, SIM)
        for sc, ep in zip(stored, eps):
            assert robustness(formula, ep.trace) == pytest.approx(sc.robustness, abs=1e-12)
        # an untrained policy is easy to falsify
        assert any(sc.robustness < 0 for sc in stored)


def test_resume_reloads_falsified_pool(dataset, frarl_run, tmp_path):
    run, trainer, _, _ = frarl_run
    t = Trainer(trainer.cfg, dataset, run)
    t.resume(run / "checkpoints/final.ckpt")
    assert len(t.pool.falsified) == 30 and t.falsify_calls == 3


def test_falsifier_failure_keeps_training(dataset, monkeypatch):
    def broken(*a, **k):
        raise RuntimeError("simulator crashed")

    monkeypatch.setattr(trainers, "falsify", broken)
    res = train_frarl(small_cfg("frarl", falsify_every=1), dataset)
    assert res.iterations == 8
    assert all("simulator crashed" in e["error"] for e in res.falsification)
    assert len(res.falsification) == 4


def test_stops_when_falsifier_finds_nothing(dataset):
    cfg = small_cfg("frarl", falsify_every=1, converge_patience=2)
    res = train_frarl(cfg, dataset, formula=TrueF())
    assert res.converged
    assert len(res.falsification) == 2
    # four warm-up iterations, one between the two calls, then the stop
    assert res.iterations == 4 + 1


# --------------------------------------------------------------------------
# RARL


def test_rarl_alternation_counts(dataset, monkeypatch):
    order = []
    real_p, real_a = Trainer._protagonist_iteration, Trainer._adversary_iteration
    monkeypatch.setattr(Trainer, "_protagonist_iteration",
                        lambda self, mode: order.append("P" if mode == "mixed-adversary" else "w") or real_p(self, mode))
    monkeypatch.setattr(Trainer, "_adversary_iteration", lambda self: order.append("A") or real_a(self))
    cfg = small_cfg("rarl", warmup_steps=BATCH, total_steps=23 * BATCH)
    res = train_rarl(cfg, dataset)
    assert "".join(order) == "w" + "P" * 10 + "A" + "P" * 10 + "A" + "PP"
    assert res.adversary is not None


def zero_adversary() -> PolicyParams:
    p = PolicyParams.zeros()
    p.tensors["log_std"][:] = -1000.0  # exp underflows to exactly 0
    return p


def test_zero_adversary_is_constant_velocity_leader(dataset):
    fixed = dataclasses.replace(dataset[0], ego_velocity=25.0)
    flat = dataclasses.replace(fixed, lead_accel=np.zeros(SIM.max_steps))
    cfg = small_cfg("rarl", adversary_mix=1.0)
    protagonist = trainers.init_params(np.random.default_rng(1))

    driven = Collector(cfg, ScenarioPool([fixed], adversary_mix=1.0), np.random.default_rng(0))
    driven.set_mode("mixed-adversary")
    plain = Collector(cfg, ScenarioPool([flat]), np.random.default_rng(0))
    plain.set_mode("dataset")
    with np.errstate(all="ignore"):
        a = driven.collect(protagonist, np.random.default_rng(2), zero_adversary(), np.random.default_rng(3))
    b = plain.collect(protagonist, np.random.default_rng(2))
    for name in ("obs", "actions", "logp", "rewards", "advantages", "returns"):
        np.testing.assert_array_equal(getattr(a.batch, name), getattr(b.batch, name), err_msg=name)
    assert a.adversary_batch is None


def test_adversary_reward_is_negated(dataset):
    cfg = small_cfg("rarl", task="acc")
    col = Collector(cfg, ScenarioPool(dataset), np.random.default_rng(0))
    col.set_mode("adversary")
    rng = np.random.default_rng(4)
    out = col.collect(trainers.init_params(rng), rng, trainers.init_params(rng), np.random.default_rng(5))
    np.testing.assert_array_equal(out.adversary_batch.rewards, -out.batch.rewards)
    assert np.any(out.batch.rewards != 0)


# --------------------------------------------------------------------------
# Desk-scale training


@pytest.mark.slow
def test_ppo_learns_to_avoid_collisions():
    from frarl import data

    split = data.preprocess(data.generate_synthetic_dataset(400, np.random.default_rng(0)), np.random.default_rng(1))
    res = train_ppo(TrainConfig(total_steps=200_000), split.train)
    tail = [r["mean_reward"] for r in res.metrics[-10:] if not np.isnan(r["mean_reward"])]
    assert np.mean(tail) > -0.1
