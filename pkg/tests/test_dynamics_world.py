import math

import numpy as np
import pytest

from reefnav.dynamics import (CRUISE_SPEED, MAX_TURN_RATE, Pose, RobotState,
                              make_robot_state, step_dynamics, wrap_angle)
from reefnav.world import WorldParams, generate_world


def test_wrap_angle_range():
    for a in np.linspace(-20, 20, 400):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)


def test_pose_invariants_enforced():
    p = Pose(x=0, y=0, z=1, yaw=3 * math.pi, pitch=2.0)
    assert -math.pi < p.yaw <= math.pi
    assert abs(p.pitch) <= math.pi / 4 + 1e-15


def test_speed_must_be_positive():
    with pytest.raises(ValueError):
        RobotState(pose=Pose(0, 0, 1, 0), speed=0.0)


def test_straight_advance_matches_cruise_speed():
    state = make_robot_state(Pose(0, 0, 5, 0), speed=0.41)
    out = step_dynamics(state, 0.0, 0.0, dt=1.0)
    assert math.isclose(out.pose.x, 0.41, abs_tol=1e-12)
    assert out.pose.y == 0.0 and out.pose.z == 5.0


def test_command_saturation():
    state = make_robot_state(Pose(0, 0, 5, 0))
    for _ in range(10):  # past the slew window
        state = step_dynamics(state, 2 * MAX_TURN_RATE, 0.0, dt=1 / 6)
        assert state.yaw_rate <= MAX_TURN_RATE + 1e-15
    assert math.isclose(state.yaw_rate, MAX_TURN_RATE, abs_tol=1e-12)


def test_constant_max_yaw_rate_traces_circle():
    # Closed-form radius speed/omega vs the integrated polygon, 1e-3 m.
    dt = 1 / 6
    state = make_robot_state(Pose(0, 0, 5, 0), speed=CRUISE_SPEED)
    state = RobotState(pose=state.pose, speed=state.speed, yaw_rate=MAX_TURN_RATE,
                       max_yaw_rate=MAX_TURN_RATE, max_pitch_rate=MAX_TURN_RATE)
    steps = int(round(2 * math.pi / (MAX_TURN_RATE * dt)))
    pts = []
    for _ in range(steps):
        state = step_dynamics(state, MAX_TURN_RATE, 0.0, dt=dt)
        pts.append([state.pose.x, state.pose.y])
    pts = np.array(pts)
    assert np.hypot(*pts[-1]) < 1e-9  # closed after a full revolution
    center = pts.mean(axis=0)
    radii = np.hypot(*(pts - center).T)
    assert np.max(np.abs(radii - CRUISE_SPEED / MAX_TURN_RATE)) < 1e-3


def test_energy_free_kinematics():
    rng = np.random.default_rng(3)
    state = make_robot_state(Pose(0, 0, 5, 0.3), speed=0.41)
    for _ in range(200):
        prev = state.pose
        state = step_dynamics(state, rng.uniform(-1, 1), rng.uniform(-1, 1), dt=1 / 6)
        d = math.dist((prev.x, prev.y, prev.z), (state.pose.x, state.pose.y, state.pose.z))
        assert abs(d - 0.41 / 6) < 1e-9


def test_pose_invariants_after_random_commands():
    rng = np.random.default_rng(11)
    state = make_robot_state(Pose(0, 0, 5, 0))
    for _ in range(500):
        state = step_dynamics(state, rng.uniform(-2, 2), rng.uniform(-2, 2), dt=1 / 6,
                              current=(rng.uniform(-0.1, 0.1), 0.0))
        assert -math.pi < state.pose.yaw <= math.pi
        assert abs(state.pose.pitch) <= math.pi / 4 + 1e-12
        assert abs(state.yaw_rate) <= MAX_TURN_RATE + 1e-12


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        step_dynamics(make_robot_state(Pose(0, 0, 5, 0)), 0, 0, dt=0.0)


def test_world_determinism():
    a = generate_world(7)
    b = generate_world(7)
    assert np.array_equal(a.elevation, b.elevation)
    assert np.array_equal(a.surface_class, b.surface_class)
    c = generate_world(8)
    assert not np.array_equal(a.surface_class, c.surface_class)


def test_world_no_coral_patches():
    w = generate_world(7, WorldParams(coral_patches=0))
    assert w.coral_fraction == 0.0


def test_world_coral_target_band():
    w = generate_world(7, WorldParams(coral_target=0.3))
    assert 0.2 <= w.coral_fraction <= 0.4


def test_world_rejects_bad_extent():
    with pytest.raises(ValueError):
        generate_world(1, WorldParams(extent=(0.0, 40.0)))
    with pytest.raises(ValueError):
        generate_world(1, WorldParams(extent=(40.0, -1.0)))


def test_world_elevation_below_surface():
    w = generate_world(5)
    assert np.all(np.isfinite(w.elevation))
    assert np.all(w.elevation < 0.0)
