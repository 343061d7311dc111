import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frarl import evaluation as ev
from frarl.policy import init_params, save_checkpoint
from frarl.sim import (
    SimConfig,
    braking_oracle_controller,
    constant_velocity_controller,
    full_brake_controller,
    random_scenarios,
    write_scenarios,
)

SIM = SimConfig()


@pytest.fixture(scope="module")
def randoms():
    return random_scenarios(100, seed=7)


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpt")
    paths = []
    for seed in range(3):
        p = d / f"seed{seed}.ckpt"
        save_checkpoint(p, init_params(np.random.default_rng(seed)))
        paths.append(p)
    return paths


# --------------------------------------------------------------------------
# evaluate


def test_braking_oracle_never_collides(randoms):
    rep = ev.evaluate(braking_oracle_controller(SIM), randoms, "ba", SIM)
    assert rep.collision_rate == 0.0
    assert rep.scenarios == 100


def test_full_brake_always_reverses(randoms):
    rep = ev.evaluate(full_brake_controller(SIM), randoms[:20], "ba", SIM)
    assert rep.reverse_rate == 1.0 and rep.collision_rate == 0.0
    assert rep.mean_reward == -1.0


def test_empty_set_is_an_error():
    with pytest.raises(ValueError, match="empty"):
        ev.evaluate(constant_velocity_controller, [], "ba")
    with pytest.raises(ValueError, match="task"):
        ev.evaluate(constant_velocity_controller, random_scenarios(1, 0), "lane-keeping")


def test_rates_recomputed_from_episode_log(randoms, checkpoints, tmp_path):
    rep = ev.evaluate(checkpoints[0], randoms, "acc", SIM, "random-test", "ppo")
    path = tmp_path / "episodes.csv"
    ev.write_episode_log(rep, path)
    again = ev.report_from_log(ev.read_episode_log(path), "acc", "random-test", "ppo")
    assert again.row() == rep.row()
    causes = [e["cause"] for e in rep.episodes]
    assert rep.collision_rate == causes.count("collision") / len(causes)


def test_evaluation_leaves_inputs_untouched(randoms, checkpoints, tmp_path):
    write_scenarios(randoms[:5], tmp_path / "sc")
    before = {p: p.read_bytes() for p in [checkpoints[1], *sorted((tmp_path / "sc").iterdir())]}
    ev.evaluate(checkpoints[1], randoms[:5])
    from frarl.sim import read_scenarios

    ev.evaluate(checkpoints[1], read_scenarios(tmp_path / "sc"))
    assert all(p.read_bytes() == b for p, b in before.items())


def test_accepts_params_and_paths(randoms, checkpoints):
    from frarl.policy import load_checkpoint

    a = ev.evaluate(checkpoints[2], randoms[:10])
    b = ev.evaluate(load_checkpoint(checkpoints[2]).params, randoms[:10])
    assert a.row() == b.row()
    with pytest.raises(TypeError):
        ev.as_controller(42)


# --------------------------------------------------------------------------
# compare_methods


def test_single_method_single_row(randoms, checkpoints):
    cmp = ev.compare_methods({"ppo": [("ba", checkpoints[0])]}, {"random-test": randoms[:10]}, tasks=["ba"])
    lines = ev.render_table(cmp).splitlines()
    assert len(lines) == 3 and lines[2].startswith("PPO")
    # the only value in a column is also its minimum
    assert lines[2].count("**") == 4


def test_minimum_is_bold_and_missing_cells_reported(randoms, checkpoints):
    runs = {
        "ppo": [("ba", checkpoints[0]), ("ba", checkpoints[1])],
        "frarl": [("ba", braking_oracle_controller(SIM))],
    }
    cmp = ev.compare_methods(runs, {"random-test": randoms[:30]}, tasks=["ba", "acc"])
    assert cmp.cells[("frarl", ("ba", "random-test", "collision"))].mean == 0.0
    assert cmp.cells[("ppo", ("ba", "random-test", "collision"))].seeds == 2
    assert cmp.cells[("ppo", ("acc", "random-test", "collision"))] is None
    assert set(cmp.missing) == {("ppo", "acc", "random-test"), ("frarl", "acc", "random-test")}
    text = ev.render_table(cmp)
    frarl_line = next(l for l in text.splitlines() if l.startswith("FRARL"))
    assert "**0.000%**" in frarl_line
    assert "missing: PPO acc random-test" in text


def test_export_is_byte_identical(randoms, checkpoints, tmp_path):
    runs = {"ppo": [("ba", checkpoints[0])], "rarl": [("ba", checkpoints[1])]}
    for name in ("a.csv", "b.csv"):
        cmp = ev.compare_methods(runs, {"dataset-test": randoms[:10]}, tasks=["ba"])
        ev.write_comparison(cmp, tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0].split(",")[-1] == "reference"
    ppo_collision = next(r for r in rows if r.startswith("ppo,ba,dataset-test,collision"))
    assert ppo_collision.endswith(",0.0459")


def test_reference_rates_are_rates():
    assert all(0 <= v <= 1 for v in ev.REFERENCE_RATES.values())
    assert ev.REFERENCE_RATES[("frarl", "acc", "random-test", "collision")] == 0.0
    assert len(ev.REFERENCE_RATES) == 3 * 2 * 2 * 2


@given(st.lists(st.sampled_from(["collision", "reverse", "max-steps", "lane-end"]), min_size=1, max_size=40))
@settings(max_examples=50, deadline=None)
def test_rates_are_fractions(causes):
    log = [{"cause": c, "reward": 0.0, "length": 1, "sd_violations": 0} for c in causes]
    rep = ev.report_from_log(log, "ba")
    assert 0 <= rep.collision_rate <= 1 and 0 <= rep.reverse_rate <= 1
    assert rep.collision_rate + rep.reverse_rate <= 1


# --------------------------------------------------------------------------
# Learning curves


def log_of(values, start=0):
    return [{"step": str(128 * (i + start)), "mean_reward": repr(float(v)), "sd_violation_steps": "0"}
            for i, v in enumerate(values)]


def test_window_one_passes_values_through():
    vals = [0.5, -1.0, 3.0, float("nan"), 2.0]
    _, mean, std = ev.learning_curve([log_of(vals)], "mean_reward", window=1)
    np.testing.assert_array_equal(mean, vals)
    assert np.all(std[~np.isnan(std)] == 0)


def test_one_seed_has_zero_std():
    _, _, std = ev.learning_curve([log_of(np.linspace(-1, 0, 30))], "mean_reward", window=10)
    assert np.all(std == 0)


def test_mean_of_constant_logs():
    steps, mean, std = ev.learning_curve([log_of([0.0] * 20), log_of([1.0] * 20)], "mean_reward", window=10)
    assert np.all(mean == 0.5) and np.all(std == 0.5)
    assert steps[0] == 0 and len(steps) == 20


def test_curves_align_on_shared_steps():
    steps, mean, _ = ev.learning_curve([log_of([1.0] * 10), log_of([3.0] * 10, start=5)], "mean_reward", 1)
    assert list(steps) == [128 * i for i in range(5, 10)]
    assert np.all(mean == 2.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.integers(1, 15))
@settings(max_examples=100, deadline=None)
def test_smoothing_stays_within_range(values, window):
    out = ev.smooth(values, window)
    assert out.shape == (len(values),)
    assert np.all(out >= min(values) - 1e-6) and np.all(out <= max(values) + 1e-6)


def test_smooth_rejects_zero_window():
    with pytest.raises(ValueError):
        ev.smooth([1.0], 0)


def test_emit_learning_curves(tmp_path):
    logs = {"ppo": [log_of([0.0, 1.0])], "frarl": [log_of([1.0, 1.0]), log_of([0.0, 0.0])]}
    paths = ev.emit_learning_curves(logs, tmp_path / "curves", window=1)
    assert sorted(p.name for p in paths) == [
        "frarl_reward.csv", "frarl_sd_violations.csv", "ppo_reward.csv", "ppo_sd_violations.csv",
    ]
    text = (tmp_path / "curves/frarl_reward.csv").read_text()
    assert text == "step,mean,std,seeds\n0,0.5,0.5,2\n128,0.5,0.5,2\n"
    ev.emit_learning_curves(logs, tmp_path / "again", window=1)
    assert (tmp_path / "again/ppo_reward.csv").read_bytes() == (tmp_path / "curves/ppo_reward.csv").read_bytes()
