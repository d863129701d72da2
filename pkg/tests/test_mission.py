import math

import numpy as np
import pytest

from reefnav.dynamics import (CONTROL_DT, CRUISE_SPEED, MAX_TURN_RATE, Pose,
                              make_robot_state, step_dynamics)
from reefnav.hindsight import Frame, Trajectory
from reefnav.mission import (GreedyWaypointPolicy, Mission, SpliceConfig,
                             greedy_policy, replay_open_loop, run_mission,
                             splice_waypoints)
from reefnav.sensors import Observation, SensorNoise, SensorSuite
from reefnav.world import WorldParams, generate_world


def _flat_world(extent=(60.0, 60.0)):
    return generate_world(1, WorldParams(extent=extent, depth_base=6.0,
                                         relief_amplitude=0.0, coral_patches=0,
                                         obstacle_density=0.0))


def _quiet_sensors():
    return SensorSuite(noise=SensorNoise(compass_std=0, gyro_std=0, depth_std=0,
                                         sonar_std=0, odom_std=0, dropout_prob=0,
                                         sand_dropout=False, scale_drift_std=0,
                                         scale_init=1.0))


def test_greedy_dead_ahead():
    heads = greedy_policy(Pose(0, 0, 5, 0), np.array([4.0, 0.0]))
    assert heads.f_yaw[3] == 1.0
    assert heads.f_pitch[3] == 1.0


def test_greedy_90_degrees_saturates():
    heads = greedy_policy(Pose(0, 0, 5, 0), np.array([0.0, 5.0]))
    assert heads.f_yaw[6] == 1.0  # class +3


def test_greedy_behind_breaks_anticlockwise():
    heads = greedy_policy(Pose(0, 0, 5, 0), np.array([-5.0, 0.0]))
    assert heads.f_yaw[6] == 1.0


def test_mission_validation():
    with pytest.raises(ValueError):
        Mission(waypoints=np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Mission(waypoints=np.array([[1.0, 1.0]]), reach_threshold=0.0)


def test_waypoint_at_start_reached_immediately():
    w = _flat_world()
    start = Pose(30.0, 30.0, 5.0, 0.0)
    mission = Mission(waypoints=np.array([[30.0, 30.0]]))
    log = run_mission(w, GreedyWaypointPolicy(), mission, np.random.default_rng(0),
                      start, sensors=_quiet_sensors(), use_estimated=False)
    assert log.waypoints_reached == 1
    assert log.outcome == "completed"
    assert len(log.rows) == 0


def test_waypoint_advancement_monotone():
    w = _flat_world()
    start = Pose(20.0, 30.0, 5.0, 0.0)
    mission = Mission(waypoints=np.array([[26.0, 30.0], [32.0, 30.0], [38.0, 30.0]]))
    log = run_mission(w, GreedyWaypointPolicy(), mission, np.random.default_rng(0),
                      start, sensors=_quiet_sensors(), use_estimated=False)
    idx = [r.waypoint_index for r in log.rows]
    assert all(a <= b for a, b in zip(idx, idx[1:]))
    assert log.outcome == "completed"


def test_greedy_reaches_within_1p5x_straight_time():
    w = _flat_world()
    rng = np.random.default_rng(2)
    for _ in range(6):
        start = Pose(30.0, 30.0, 5.0, rng.uniform(-math.pi, math.pi))
        ang = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(6.0, 10.0)
        wp = np.array([30.0 + dist * math.cos(ang), 30.0 + dist * math.sin(ang)])
        mission = Mission(waypoints=wp[None], reach_threshold=1.0, waypoint_timeout=90.0)
        log = run_mission(w, GreedyWaypointPolicy(), mission, np.random.default_rng(0),
                          start, sensors=_quiet_sensors(), use_estimated=False)
        assert log.outcome == "completed"
        straight_steps = dist / CRUISE_SPEED / CONTROL_DT
        assert len(log.rows) <= 1.5 * straight_steps


def test_corner_below_turn_radius_overshoots():
    # Fig-3 geometry: waypoint ahead, then 90 degrees left at a spacing below
    # the minimum turn radius; the robot turns the right way but cannot hit
    # the corner waypoint on the first pass.
    w = _flat_world()
    spacing = 0.6
    assert spacing < CRUISE_SPEED / MAX_TURN_RATE
    start = Pose(20.0, 30.0, 5.0, 0.0)
    wp1 = np.array([26.0, 30.0])
    wp2 = wp1 + np.array([0.0, spacing])
    mission = Mission(waypoints=np.stack([wp1, wp2]), reach_threshold=0.25,
                      waypoint_timeout=30.0)
    log = run_mission(w, GreedyWaypointPolicy(), mission, np.random.default_rng(0),
                      start, sensors=_quiet_sensors(), use_estimated=False)
    after = [r for r in log.rows if r.waypoint_index == 1]
    assert after, "first waypoint was never reached"
    d = [math.hypot(r.pose.x - wp2[0], r.pose.y - wp2[1]) for r in after]
    first_pass = d[:20]
    assert min(first_pass) > mission.reach_threshold, "no overshoot: corner hit directly"
    turning_left = [r.yaw_expectation for r in after[:10]]
    assert np.mean(turning_left) > 0  # it does steer the correct way


def _driven_trajectory(start, commands, seed=0):
    """Simulate a command list and record replay-grade frames."""
    state = make_robot_state(start)
    frames = []
    grid = np.zeros((2, 2, 1), dtype=np.float32)
    for t, (yc, pc) in enumerate(commands):
        new_state = step_dynamics(state, yc, pc, CONTROL_DT)
        frames.append(Frame(observation=Observation(forward_grid=grid,
                                                    down_coral_fraction=0.0),
                            pose=state.pose, est_pose=state.pose, yaw_class=0,
                            pitch_class=0, time_index=t, cmd_yaw_rate=yc,
                            cmd_pitch_rate=pc, act_yaw_rate=new_state.yaw_rate,
                            act_pitch_rate=new_state.pitch_rate))
        state = new_state
    return Trajectory(frames=frames, seed=seed), state


def _path_len(xy):
    d = np.diff(np.asarray(xy), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def test_splice_exact_join_sums_path_lengths():
    # B starts exactly at A's end pose and heading: the spliced path has no
    # gap at the join, its length is the sum of the segment lengths from the
    # chain start, and open-loop replay reproduces it exactly.
    a, _ = _driven_trajectory(Pose(5.0, 20.0, 5.0, 0.0), [(0.0, 0.0)] * 60)
    b, _ = _driven_trajectory(a.frames[-1].pose, [(0.15, 0.0)] * 60)
    cfg = SpliceConfig(eps_pos=0.01, eps_heading=0.01, spacing=0.5, waypoint_count=13,
                       min_leg=50.0, max_leg=60.0, reach_threshold=0.5, max_attempts=60)
    mission, rep = splice_waypoints([a, b], cfg, np.random.default_rng(0))
    assert rep.segments == 2
    assert rep.certified
    hops = np.hypot(*np.diff(rep.path, axis=0).T)
    assert np.max(hops) <= CRUISE_SPEED * CONTROL_DT + 1e-9  # continuous across the join
    ti0, fj0 = rep.chain[0]
    donors = [a, b]
    a_xy = [[f.pose.x, f.pose.y] for f in donors[ti0].frames[fj0:]]
    b_xy = [[f.pose.x, f.pose.y] for f in b.frames]
    assert math.isclose(_path_len(rep.path), _path_len(a_xy) + _path_len(b_xy),
                        abs_tol=1e-9)
    replay = replay_open_loop(donors, rep)
    assert np.max(np.hypot(*(replay - rep.path).T)) < 1e-9


def test_splice_zero_tolerance_single_segment():
    rng = np.random.default_rng(3)
    trajs = []
    for k in range(4):
        cmds = [(float(rng.normal(0, 0.15)), 0.0) for _ in range(180)]
        traj, _ = _driven_trajectory(Pose(10.0 + 5 * k, 20.0, 5.0, float(rng.uniform(-3, 3))),
                                     cmds, seed=k)
        trajs.append(traj)
    cfg = SpliceConfig(eps_pos=0.0, eps_heading=0.0, spacing=2.0, waypoint_count=4,
                       reach_threshold=1.0, max_attempts=10)
    mission, rep = splice_waypoints(trajs, cfg, np.random.default_rng(1))
    assert rep.segments == 1


def test_splice_replay_certificate():
    rng = np.random.default_rng(4)
    trajs = []
    for k in range(12):
        cmds = [(float(np.clip(rng.normal(0, 0.2), -MAX_TURN_RATE, MAX_TURN_RATE)), 0.0)
                for _ in range(240)]
        traj, _ = _driven_trajectory(
            Pose(float(rng.uniform(15, 45)), float(rng.uniform(15, 45)), 5.0,
                 float(rng.uniform(-math.pi, math.pi))), cmds, seed=k)
        trajs.append(traj)
    cfg = SpliceConfig(spacing=2.0, waypoint_count=6, reach_threshold=1.0)
    mission, rep = splice_waypoints(trajs, cfg, np.random.default_rng(2))
    replay = replay_open_loop(trajs, rep)
    for wp in mission.waypoints:
        miss = float(np.min(np.hypot(replay[:, 0] - wp[0], replay[:, 1] - wp[1])))
        assert miss <= cfg.eps_pos + cfg.reach_threshold


def test_splice_warns_when_target_unreachable():
    a, _ = _driven_trajectory(Pose(5.0, 20.0, 5.0, 0.0), [(0.0, 0.0)] * 30)  # ~2 m path
    cfg = SpliceConfig(spacing=3.0, waypoint_count=10, max_attempts=5, reach_threshold=1.0)
    with pytest.warns(UserWarning, match="splice"):
        mission, rep = splice_waypoints([a], cfg, np.random.default_rng(0))
    assert mission.waypoints.shape[0] < 10


def test_splice_requires_usable_store():
    with pytest.raises(ValueError):
        splice_waypoints([], SpliceConfig(), np.random.default_rng(0))
