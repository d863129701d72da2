import math

import numpy as np
import pytest
from scipy.stats import chisquare

from reefnav.dynamics import Pose
from reefnav.hindsight import (Frame, GoalSample, Trajectory, TrajectoryStoreError,
                               diff, relabel_batch, relabel_goal, store_load,
                               store_save)
from reefnav.sensors import Observation


def test_diff_identity():
    a = Pose(3.0, -2.0, 1.0, 0.7)
    assert np.array_equal(diff(a, a), np.zeros(2))


def test_diff_ahead():
    a = Pose(0, 0, 0, 0.0)
    np.testing.assert_allclose(diff(a, Pose(1, 0, 0, 0)), [1.0, 0.0], atol=1e-15)


def test_diff_rotated_frames():
    # facing +y, world displacement (0, 2) -> 2 m straight ahead
    np.testing.assert_allclose(diff(Pose(0, 0, 0, math.pi / 2), Pose(0, 2, 0, 0)),
                               [2.0, 0.0], atol=1e-12)
    # facing -x at (5,5), b at (4,5) -> 1 m ahead
    np.testing.assert_allclose(diff(Pose(5, 5, 0, math.pi), Pose(4, 5, 0, 0)),
                               [1.0, 0.0], atol=1e-12)


def _obs(rng=None, shape=(2, 2, 1)):
    grid = (rng.random(shape).astype(np.float32) if rng is not None
            else np.zeros(shape, dtype=np.float32))
    return Observation(forward_grid=grid, down_coral_fraction=0.5)


def _traj(n, rng, seed=0):
    frames = []
    x = y = 0.0
    yaw = rng.uniform(-math.pi, math.pi)
    for t in range(n):
        frames.append(Frame(observation=_obs(rng), pose=Pose(x, y, 5.0, yaw),
                            est_pose=Pose(x + 0.01, y - 0.01, 5.0, yaw),
                            yaw_class=int(rng.integers(-3, 4)),
                            pitch_class=int(rng.integers(-3, 4)), time_index=t,
                            cmd_yaw_rate=float(rng.normal()), cmd_pitch_rate=0.1,
                            act_yaw_rate=0.2, act_pitch_rate=-0.1))
        yaw += rng.normal() * 0.2
        x += 0.0683 * math.cos(yaw)
        y += 0.0683 * math.sin(yaw)
    return Trajectory(frames=frames, seed=seed)


def test_relabel_goal_matches_diff_bit_exactly():
    rng = np.random.default_rng(0)
    trajs = [_traj(40, rng), _traj(25, rng)]
    samples = relabel_batch(trajs, 500, tau=120, rng=rng, use_estimated=True)
    for s in samples:
        tr = trajs[s.traj_index]
        expected = diff(tr.frames[s.t].est_pose, tr.frames[s.t + s.dt_steps].est_pose)
        assert np.array_equal(s.goal, expected)
        assert s.yaw_class == tr.frames[s.t].yaw_class


def test_relabel_uses_ground_truth_when_asked():
    rng = np.random.default_rng(1)
    trajs = [_traj(30, rng)]
    samples = relabel_batch(trajs, 100, tau=10, rng=rng, use_estimated=False)
    for s in samples:
        tr = trajs[s.traj_index]
        expected = diff(tr.frames[s.t].pose, tr.frames[s.t + s.dt_steps].pose)
        assert np.array_equal(s.goal, expected)


def test_dt_support_bound():
    # trajectory with max frame index 10; at t from its tail, dt hits only
    # {1, ..., min(tau, 10 - t)} and the whole support appears
    rng = np.random.default_rng(2)
    tr = _traj(11, rng)
    seen = set()
    for _ in range(1000):
        samples = relabel_batch([tr], 1, tau=120, rng=rng)
        s = samples[0]
        assert 1 <= s.dt_steps <= 10 - s.t
        if s.t == 8:
            seen.add(s.dt_steps)
    assert seen == {1, 2}


def test_dt_uniformity_chi_square():
    rng = np.random.default_rng(3)
    tr = _traj(30, rng)
    tau = 12
    t_fixed = 5
    support = min(tau, (len(tr) - 1) - t_fixed)
    counts = np.zeros(support, dtype=int)
    n = 10_000
    for _ in range(n):
        dt = int(rng.integers(1, support + 1))  # sampler's dt law, isolated
        counts[dt - 1] += 1
    assert chisquare(counts).pvalue > 0.01
    # and through the sampler itself, conditioned on t
    counts2 = {}
    draws = 0
    while draws < n:
        s = relabel_batch([tr], 64, tau=tau, rng=rng)
        for g in s:
            if g.t == t_fixed:
                counts2[g.dt_steps] = counts2.get(g.dt_steps, 0) + 1
                draws += 1
    observed = np.array([counts2.get(k, 0) for k in range(1, support + 1)])
    assert chisquare(observed).pvalue > 0.01


def test_short_trajectories_skipped():
    rng = np.random.default_rng(4)
    short = Trajectory(frames=_traj(1, rng).frames)
    ok = _traj(10, rng)
    samples = relabel_batch([short, ok], 50, tau=5, rng=rng)
    assert all(s.traj_index == 1 for s in samples)
    with pytest.raises(ValueError):
        relabel_batch([short], 10, tau=5, rng=rng)
    with pytest.raises(ValueError):
        relabel_batch([ok], 10, tau=0, rng=rng)


def test_goal_magnitude_bounded_by_path_length():
    rng = np.random.default_rng(5)
    trajs = [_traj(60, rng)]
    samples = relabel_batch(trajs, 300, tau=120, rng=rng, use_estimated=False)
    for s in samples:
        poses = trajs[s.traj_index].poses[s.t:s.t + s.dt_steps + 1]
        path = sum(math.dist((a.x, a.y), (b.x, b.y)) for a, b in zip(poses, poses[1:]))
        assert np.linalg.norm(s.goal) <= path + 1e-9


def test_store_roundtrip_20500_records(tmp_path):
    rng = np.random.default_rng(6)
    trajs = [_traj(342, rng, seed=k) for k in range(60)]  # ~20,500 frames
    assert sum(len(t) for t in trajs) == 20520
    path = tmp_path / "big.traj"
    store_save(path, trajs, grid_shape=(2, 2, 1))
    loaded = store_load(path)
    assert len(loaded) == 60
    for a, b in zip(trajs, loaded):
        assert a.seed == b.seed and a.collided == b.collided and len(a) == len(b)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.observation.forward_grid, fb.observation.forward_grid)
            assert fa.pose == fb.pose and fa.est_pose == fb.est_pose
            assert fa.yaw_class == fb.yaw_class and fa.pitch_class == fb.pitch_class
            assert np.float32(fa.cmd_yaw_rate) == np.float32(fb.cmd_yaw_rate)
            assert fa.time_index == fb.time_index


def test_store_empty_roundtrip(tmp_path):
    path = tmp_path / "empty.traj"
    store_save(path, [], grid_shape=(2, 2, 1))
    assert store_load(path) == []


def test_store_truncation_names_offset(tmp_path):
    rng = np.random.default_rng(7)
    path = tmp_path / "trunc.traj"
    store_save(path, [_traj(20, rng)], grid_shape=(2, 2, 1))
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(TrajectoryStoreError, match="truncated at offset"):
        store_load(path)


def test_store_corruption_names_trajectory(tmp_path):
    rng = np.random.default_rng(8)
    path = tmp_path / "corrupt.traj"
    store_save(path, [_traj(20, rng), _traj(20, rng)], grid_shape=(2, 2, 1))
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF  # flip a byte inside trajectory 1's payload
    path.write_bytes(bytes(data))
    with pytest.raises(TrajectoryStoreError, match="trajectory"):
        store_load(path)


def test_store_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.traj"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
    with pytest.raises(TrajectoryStoreError, match="magic"):
        store_load(path)
