"""Uncertainty-gated exploration.

Where the behaviour policy's yaw distribution is high-entropy (the labeller
was indifferent), a committed exploratory action is blended in; confident
predictions (obstacle avoidance, coral steering) pass through untouched.
Pitch is never modified.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (CONTROL_DT, CRUISE_SPEED, RATE_PER_CLASS, Pose,
                       make_robot_state, step_dynamics)
from .hindsight import Frame, Trajectory
from .policy import ActionHeads, ActionSmoother, N_CLASSES, decode_action
from .sensors import SensorSuite, render_observation
from .state_estimation import Ekf, EkfConfig, StateEstimator


@dataclass(frozen=True)
class ExploreConfig:
    p_expl: tuple = (1 / 7,) * N_CLASSES  # exploration-category probabilities
    t_lo: float = 2.0  # commit-duration bounds (s)
    t_hi: float = 6.0
    bandwidth: float = 1.0  # entropy bandwidth B (nats)

    def __post_init__(self):
        if abs(sum(self.p_expl) - 1.0) > 1e-9 or min(self.p_expl) < 0:
            raise ValueError("p_expl must be a probability vector")
        if not 0 < self.t_lo <= self.t_hi:
            raise ValueError("need 0 < t_lo <= t_hi")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass
class ExploreState:
    f_expl: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES))
    time_remaining: float = 0.0
    commit_count: int = 0


def entropy(p):
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def gate_weight(f_yaw, bandwidth):
    """w = 1 - exp(-0.5 (H/B)^2): zero for one-hot heads, toward 1 as the
    head entropy grows past the bandwidth."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    h = entropy(f_yaw)
    return 1.0 - np.exp(-0.5 * (h / bandwidth) ** 2)


def mix(f_yaw, f_expl, w):
    """Convex blend (1-w) f + w f_expl."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"mixing weight {w} outside [0, 1]")
    return (1.0 - w) * np.asarray(f_yaw) + w * np.asarray(f_expl)


def explore_step(heads, state, cfg, rng, dt):
    """Advance the commitment timer and blend the committed action into the
    yaw head. Returns (mixed ActionHeads, updated ExploreState)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.time_remaining <= 0.0:
        cls = rng.choice(N_CLASSES, p=np.asarray(cfg.p_expl))
        f_expl = np.zeros(N_CLASSES)
        f_expl[cls] = 1.0
        state = ExploreState(f_expl=f_expl,
                             time_remaining=float(rng.uniform(cfg.t_lo, cfg.t_hi)),
                             commit_count=state.commit_count + 1)
    w = gate_weight(heads.f_yaw, cfg.bandwidth)
    mixed = ActionHeads(f_yaw=mix(heads.f_yaw, state.f_expl, w), f_pitch=heads.f_pitch)
    state = ExploreState(f_expl=state.f_expl, time_remaining=state.time_remaining - dt,
                         commit_count=state.commit_count)
    return mixed, state


def _to_class(rate):
    return int(np.clip(round(rate / RATE_PER_CLASS), -3, 3))


def run_explore_episode(world, net, cfg, rng, steps, start_pose, noise=None,
                        ekf_cfg=None, speed=CRUISE_SPEED, dt=CONTROL_DT, seed=0):
    """Roll out the behaviour policy with entropy-gated exploration, recording
    location-aware frames for hindsight relabeling. Recorded action classes
    are the quantized executed rates; estimated poses come from the on-board
    EKF, initialized at the true start."""
    sensors = SensorSuite(noise=noise) if noise else SensorSuite()
    estimator = StateEstimator(
        ekf=Ekf(start_pose, ekf_cfg or EkfConfig(speed_prior=speed)), dt=dt)
    state = make_robot_state(start_pose, speed)
    expl_state = ExploreState()
    smoother = ActionSmoother()
    frames = []
    collided = False
    for t in range(steps):
        obs = render_observation(world, state.pose)
        heads = net.act(obs, rng=rng)
        mixed, expl_state = explore_step(heads, expl_state, cfg, rng, dt)
        yaw_cmd, pitch_cmd = decode_action(mixed, smoother, RATE_PER_CLASS)
        est = estimator.pose_estimate()
        new_state = step_dynamics(state, yaw_cmd, pitch_cmd, dt, world.current)
        frames.append(Frame(observation=obs, pose=state.pose, est_pose=est,
                            yaw_class=_to_class(yaw_cmd), pitch_class=_to_class(pitch_cmd),
                            time_index=t, cmd_yaw_rate=yaw_cmd, cmd_pitch_rate=pitch_cmd,
                            act_yaw_rate=new_state.yaw_rate,
                            act_pitch_rate=new_state.pitch_rate))
        bundle = sensors.sense(world, new_state, state, rng)
        estimator.step(bundle)
        state = new_state
        if state.pose.z < 0.0:
            clamped = Pose(state.pose.x, state.pose.y, 0.0, state.pose.yaw, state.pose.pitch)
            state = make_robot_state(clamped, state.speed, state.yaw_rate, state.pitch_rate)
        if not world.in_bounds(state.pose.x, state.pose.y):
            break
        if world.altitude_of(state.pose.x, state.pose.y, state.pose.z) <= 0.0:
            collided = True
            break
    return Trajectory(frames=frames, seed=seed, collided=collided)
