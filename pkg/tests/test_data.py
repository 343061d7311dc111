import numpy as np
import pytest

from frarl import data
from frarl.sim import SimConfig

CFG = SimConfig()
HEADER = "id,frame,laneId,x,xVelocity,xAcceleration\n"


def write(tmp_path, text, name="tracks.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_vehicle(tmp_path):
    rows = "".join(f"7,{f},3,{f * 1.0},20.0,0.{f}\n" for f in (2, 0, 1))
    trajs = data.load_trajectories(write(tmp_path, HEADER + rows))
    assert len(trajs) == 1
    t = trajs[0]
    assert t.vehicle_id == 7
    np.testing.assert_array_equal(t.frames, [0, 1, 2])
    np.testing.assert_allclose(t.acceleration, [0.0, 0.1, 0.2])


def test_lane_changer_excluded(tmp_path):
    rows = "1,0,3,0,20,0\n1,1,3,1,20,0\n2,0,3,0,20,0\n2,1,4,1,20,0\n"
    trajs = data.load_trajectories(write(tmp_path, HEADER + rows))
    assert [t.vehicle_id for t in trajs] == [1]


def test_empty_file(tmp_path):
    assert data.load_trajectories(write(tmp_path, "")) == []
    assert data.load_trajectories(write(tmp_path, HEADER, "h.csv")) == []


def test_schema_errors(tmp_path):
    with pytest.raises(data.SchemaError, match="missing columns"):
        data.load_trajectories(write(tmp_path, "id,frame\n1,2\n"))
    with pytest.raises(data.SchemaError) as err:
        data.load_trajectories(write(tmp_path, HEADER + "1,0,3,0,20,0\n1,1,3,abc,20,0\n"))
    assert err.value.row == 3 and err.value.column == "x"
    with pytest.raises(data.SchemaError) as err:
        data.load_trajectories(write(tmp_path, HEADER + "1,0,3,0,20\n"))
    assert err.value.row == 2


def test_trace_is_mirrored():
    a = np.arange(300.0)
    tr = data.trajectory_to_trace(a)
    assert len(tr) == 500
    np.testing.assert_array_equal(tr[:250], a[:250])
    np.testing.assert_array_equal(tr[250:], a[249::-1])
    np.testing.assert_array_equal(tr, tr[::-1])
    assert data.trajectory_to_trace(np.zeros(200)) is None


def _traj(i, n, rng):
    acc = rng.uniform(-2, 2, n)
    return data.Trajectory(i, np.arange(n), np.zeros(n), np.full(n, 25.0), acc)


def test_preprocess_split_and_filter():
    rng = np.random.default_rng(0)
    trajs = [_traj(i, 300, rng) for i in range(10)] + [_traj(99, 200, rng)]
    split = data.preprocess(trajs, np.random.default_rng(1), CFG)
    assert (len(split.train), len(split.test)) == (7, 3)
    for sc in split.train + split.test:
        assert len(sc.lead_accel) == 500
        np.testing.assert_array_equal(sc.lead_accel, sc.lead_accel[::-1])
        sc.validate(CFG)
    again = data.preprocess(trajs, np.random.default_rng(1), CFG)
    np.testing.assert_array_equal(split.test[0].lead_accel, again.test[0].lead_accel)


def test_synthetic_dataset(tmp_path):
    a = data.generate_synthetic_dataset(100, np.random.default_rng(4), tmp_path / "a.csv")
    data.generate_synthetic_dataset(100, np.random.default_rng(4), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    loaded = data.load_trajectories(tmp_path / "a.csv")
    assert len(a) == len(loaded) == 100
    assert all(np.all(np.abs(t.acceleration) <= CFG.a_max) for t in loaded)
    assert all(np.all(t.velocity >= 0) for t in loaded)
    split = data.preprocess(loaded, np.random.default_rng(0), CFG)
    assert (len(split.train) + len(split.test)) / len(loaded) >= 0.6


def test_synthetic_lane_changers_are_filtered(tmp_path):
    kept = data.generate_synthetic_dataset(
        50, np.random.default_rng(2), tmp_path / "x.csv", lane_change_fraction=0.5
    )
    loaded = data.load_trajectories(tmp_path / "x.csv")
    assert len(loaded) == len(kept) < 50
