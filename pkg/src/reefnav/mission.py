"""Waypoint missions, trajectory-splicing waypoint generation, and the
greedy bearing baseline.

A mission policy is any callable (observation, goal_xy) -> ActionHeads,
where goal_xy is the active waypoint expressed in the robot's (estimated)
heading frame, in meters. Heads are decoded through the shared
expected-class + EMA path before hitting the dynamics.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import (CONTROL_DT, CRUISE_SPEED, RATE_PER_CLASS, Pose,
                       make_robot_state, step_dynamics, wrap_angle)
from .hindsight import diff
from .metrics import coral_visibility
from .policy import ActionHeads, ActionSmoother, N_CLASSES, decode_action
from .sensors import SensorSuite, render_observation
from .state_estimation import Ekf, EkfConfig, StateEstimator


@dataclass(frozen=True)
class Mission:
    waypoints: np.ndarray  # (K, 2) world-frame planar points
    reach_threshold: float = 1.0  # m
    waypoint_timeout: float = 60.0  # s, per waypoint

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=np.float64))
        object.__setattr__(self, "waypoints", wp)
        if wp.shape[0] < 1:
            raise ValueError("mission needs at least one waypoint")
        if self.reach_threshold <= 0:
            raise ValueError("reach threshold must be positive")


@dataclass
class MissionStep:
    step: int
    pose: Pose
    est_pose: Pose
    waypoint_index: int
    goal: np.ndarray  # robot-frame goal fed to the policy (m)
    yaw_expectation: float
    pitch_expectation: float
    coral_fraction: float
    collided: bool


@dataclass
class MissionLog:
    policy_name: str
    rows: list = field(default_factory=list)
    waypoints_reached: int = 0
    waypoints_total: int = 0
    collided: bool = False
    outcome: str = "incomplete"


def goal_in_frame(pose, waypoint):
    """Waypoint as a planar goal vector in the pose's heading frame."""
    return diff(pose, Pose(float(waypoint[0]), float(waypoint[1]), 0.0, 0.0))


def greedy_policy(pose_estimate, waypoint, degrees_per_class=15.0):
    """One-hot heads steering proportionally to the bearing error; ties for a
    waypoint directly behind break anti-clockwise (+3). Pitch is held at 0."""
    g = goal_in_frame(pose_estimate, waypoint)
    bearing = math.atan2(g[1], g[0])
    cls = int(np.clip(round(math.degrees(bearing) / degrees_per_class), -3, 3))
    f_yaw = np.zeros(N_CLASSES)
    f_yaw[cls + 3] = 1.0
    f_pitch = np.zeros(N_CLASSES)
    f_pitch[3] = 1.0
    return ActionHeads(f_yaw=f_yaw, f_pitch=f_pitch)


class GreedyWaypointPolicy:
    name = "greedy-direct"

    def __call__(self, obs, goal_xy):
        bearing = math.atan2(goal_xy[1], goal_xy[0])
        cls = int(np.clip(round(math.degrees(bearing) / 15.0), -3, 3))
        f_yaw = np.zeros(N_CLASSES)
        f_yaw[cls + 3] = 1.0
        f_pitch = np.zeros(N_CLASSES)
        f_pitch[3] = 1.0
        return ActionHeads(f_yaw=f_yaw, f_pitch=f_pitch)


class NetWaypointPolicy:
    """Adapter running a goal-conditioned PolicyNet with inference dropout."""

    name = "goal-conditioned"

    def __init__(self, net, rng):
        if net.arch.goal_mode == "none":
            raise ValueError("mission policy must be goal-conditioned")
        self.net = net
        self.rng = rng

    def __call__(self, obs, goal_xy):
        return self.net.act(obs, goal_xy, rng=self.rng)


def run_mission(world, policy, mission, rng, start_pose, speed=CRUISE_SPEED,
                dt=CONTROL_DT, sensors=None, ekf_cfg=None, use_estimated=True,
                smoother_beta=0.6):
    """Execute a mission closed-loop and log every step.

    The active waypoint (in the estimated heading frame) conditions the
    policy; it advances when the estimated position comes within the reach
    threshold. The episode ends on the final waypoint, a per-waypoint
    timeout, or a collision; all three are logged outcomes, not faults.
    """
    sensors = sensors or SensorSuite()
    estimator = StateEstimator(
        ekf=Ekf(start_pose, ekf_cfg or EkfConfig(speed_prior=speed)), dt=dt)
    state = make_robot_state(start_pose, speed)
    prev_state = state
    smoother = ActionSmoother(beta=smoother_beta)
    log = MissionLog(policy_name=getattr(policy, "name", "policy"),
                     waypoints_total=mission.waypoints.shape[0])

    wp_index = 0
    wp_clock = 0.0
    timeout_steps = mission.waypoint_timeout / dt
    step = 0
    max_steps = int(math.ceil(timeout_steps)) * mission.waypoints.shape[0] + 1

    while step < max_steps:
        est = estimator.pose_estimate() if use_estimated else state.pose
        ref = est if use_estimated else state.pose
        while wp_index < mission.waypoints.shape[0] and \
                np.hypot(*(mission.waypoints[wp_index] - ref.planar())) <= mission.reach_threshold:
            wp_index += 1
            wp_clock = 0.0
        if wp_index >= mission.waypoints.shape[0]:
            log.outcome = "completed"
            break
        if wp_clock >= mission.waypoint_timeout:
            log.outcome = "timeout"
            break

        obs = render_observation(world, state.pose)
        goal = goal_in_frame(ref, mission.waypoints[wp_index])
        heads = policy(obs, goal)
        yaw_cmd, pitch_cmd = decode_action(heads, smoother, RATE_PER_CLASS)
        ey, ep = heads.expectations()

        prev_state = state
        state = step_dynamics(state, yaw_cmd, pitch_cmd, dt, world.current)
        if state.pose.z < 0.0:
            clamped = Pose(state.pose.x, state.pose.y, 0.0, state.pose.yaw, state.pose.pitch)
            state = make_robot_state(clamped, state.speed, state.yaw_rate, state.pitch_rate)
        collided = world.in_bounds(state.pose.x, state.pose.y) and \
            world.altitude_of(state.pose.x, state.pose.y, state.pose.z) <= 0.0

        log.rows.append(MissionStep(step=step, pose=state.pose, est_pose=est,
                                    waypoint_index=wp_index, goal=goal,
                                    yaw_expectation=ey, pitch_expectation=ep,
                                    coral_fraction=coral_visibility(obs), collided=collided))
        if collided:
            log.collided = True
            log.outcome = "collision"
            break
        if not world.in_bounds(state.pose.x, state.pose.y):
            log.outcome = "left_world"
            break
        bundle = sensors.sense(world, state, prev_state, rng)
        estimator.step(bundle)
        wp_clock += dt
        step += 1

    log.waypoints_reached = wp_index
    if log.outcome == "incomplete":
        log.outcome = "timeout"
    return log


@dataclass(frozen=True)
class SpliceConfig:
    eps_pos: float = 0.5  # join position tolerance (m)
    eps_heading: float = math.radians(15.0)
    spacing: float = 3.0  # waypoint spacing along the spliced path (m)
    waypoint_count: int = 10
    reach_threshold: float = 1.0  # mission threshold the replay bound uses
    min_leg: float = 2.0  # donor run length between join opportunities (m)
    max_leg: float = 6.0
    max_attempts: int = 60
    switch_prob: float = 0.6  # chance of taking an available cross-donor join

    def __post_init__(self):
        if self.eps_pos < 0 or self.eps_heading < 0:
            raise ValueError("tolerances must be non-negative")
        if self.spacing <= 0 or self.waypoint_count < 1:
            raise ValueError("need positive spacing and waypoint count")


@dataclass
class SpliceReport:
    start_pose: Pose
    start_rates: tuple  # actuator state entering the first chain frame
    chain: list  # (traj_index, frame_index) per chain step
    segments: int  # number of donor runs
    path: np.ndarray  # (M, 2) donor positions along the chain
    commands: np.ndarray  # (M, 2) executed rate commands along the chain
    replay_misses: np.ndarray  # per-waypoint closest approach of the replay
    certified: bool


def _chain_arrays(trajectories):
    pos, yaw, tid, idx = [], [], [], []
    for i, tr in enumerate(trajectories):
        for j, f in enumerate(tr.frames):
            pos.append((f.pose.x, f.pose.y))
            yaw.append(f.pose.yaw)
            tid.append(i)
            idx.append(j)
    return (np.asarray(pos), np.asarray(yaw),
            np.asarray(tid, dtype=np.int64), np.asarray(idx, dtype=np.int64))


def replay_open_loop(trajectories, report, speed=CRUISE_SPEED, dt=CONTROL_DT):
    """Re-execute the chain's recorded rate commands from its start pose and
    actuator state; returns the (M, 2) replayed positions."""
    state = make_robot_state(report.start_pose, speed,
                             yaw_rate=report.start_rates[0], pitch_rate=report.start_rates[1])
    out = [report.start_pose.planar()]
    for yaw_cmd, pitch_cmd in report.commands[:-1]:
        state = step_dynamics(state, float(yaw_cmd), float(pitch_cmd), dt)
        out.append(state.pose.planar())
    return np.asarray(out)


def _waypoints_along(path, spacing, count):
    seglen = np.hypot(*np.diff(path, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seglen)])
    targets = spacing * np.arange(1, count + 1)
    targets = targets[targets <= s[-1]]
    wps = []
    for tgt in targets:
        k = int(np.searchsorted(s, tgt))
        k = min(k, len(path) - 1)
        t = (tgt - s[k - 1]) / max(s[k] - s[k - 1], 1e-12)
        wps.append(path[k - 1] + t * (path[k] - path[k - 1]))
    return np.asarray(wps)


def splice_waypoints(trajectories, cfg, rng, speed=CRUISE_SPEED, dt=CONTROL_DT):
    """Build a waypoint mission by chaining recorded trajectory runs whose
    joins match in position and heading, then certify it by open-loop replay
    of the donor commands: every waypoint must be passed within
    eps_pos + reach_threshold. Chains failing certification are resampled;
    if the attempt budget runs out, the best chain found is returned with a
    warning.
    """
    trajectories = [t for t in trajectories if len(t) >= 2]
    if not trajectories:
        raise ValueError("store has no trajectory long enough to splice")
    pos, yaw, tid, idx = _chain_arrays(trajectories)
    tree = cKDTree(pos)
    traj_len = np.array([len(t) for t in trajectories])
    flat_of = {}
    for flat, (ti, fj) in enumerate(zip(tid, idx)):
        flat_of[(int(ti), int(fj))] = flat

    need_len = cfg.spacing * (cfg.waypoint_count + 0.35)
    best = None

    def build_chain():
        start = int(rng.integers(0, len(pos)))
        ti, fj = int(tid[start]), int(idx[start])
        if traj_len[ti] - fj < 10:
            return None
        chain = []
        segments = 1
        length = 0.0
        next_switch = length + rng.uniform(cfg.min_leg, cfg.max_leg)
        while length < need_len:
            chain.append((ti, fj))
            if fj + 1 >= traj_len[ti]:
                joined = False
                candidates = tree.query_ball_point(pos[flat_of[(ti, fj)]], cfg.eps_pos)
                rng.shuffle(candidates)
                for c in candidates:
                    cti, cfj = int(tid[c]), int(idx[c])
                    if cti == ti and abs(cfj - fj) < 5:
                        continue
                    if traj_len[cti] - cfj < 10:
                        continue
                    if abs(wrap_angle(yaw[c] - yaw[flat_of[(ti, fj)]])) <= cfg.eps_heading:
                        ti, fj = cti, cfj
                        segments += 1
                        joined = True
                        break
                if not joined:
                    break
                continue
            here = pos[flat_of[(ti, fj)]]
            if length >= next_switch and rng.random() < cfg.switch_prob:
                candidates = tree.query_ball_point(here, cfg.eps_pos)
                rng.shuffle(candidates)
                for c in candidates:
                    cti, cfj = int(tid[c]), int(idx[c])
                    if cti == ti and abs(cfj - fj) < 5:
                        continue
                    if traj_len[cti] - cfj < 10:
                        continue
                    if abs(wrap_angle(yaw[c] - yaw[flat_of[(ti, fj)]])) <= cfg.eps_heading:
                        ti, fj = cti, cfj
                        segments += 1
                        break
                next_switch = length + rng.uniform(cfg.min_leg, cfg.max_leg)
            nxt = pos[flat_of[(ti, fj + 1)]]
            length += float(np.hypot(*(nxt - pos[flat_of[(ti, fj)]])))
            fj += 1
        chain.append((ti, fj))
        return chain, segments

    for _ in range(cfg.max_attempts):
        built = build_chain()
        if built is None:
            continue
        chain, segments = built
        path = np.asarray([[trajectories[ti].frames[fj].pose.x,
                            trajectories[ti].frames[fj].pose.y] for ti, fj in chain])
        wps = _waypoints_along(path, cfg.spacing, cfg.waypoint_count)
        if wps.shape[0] == 0:
            continue
        cmds = np.asarray([[trajectories[ti].frames[fj].cmd_yaw_rate,
                            trajectories[ti].frames[fj].cmd_pitch_rate] for ti, fj in chain])
        ti0, fj0 = chain[0]
        first = trajectories[ti0].frames[fj0]
        if fj0 > 0:
            prev = trajectories[ti0].frames[fj0 - 1]
            start_rates = (prev.act_yaw_rate, prev.act_pitch_rate)
        else:
            start_rates = (0.0, 0.0)
        report = SpliceReport(start_pose=first.pose, start_rates=start_rates, chain=chain,
                              segments=segments, path=path, commands=cmds,
                              replay_misses=np.zeros(0), certified=False)
        replay = replay_open_loop(trajectories, report, speed, dt)
        misses = np.array([np.min(np.hypot(*(replay - wp).T)) for wp in wps])
        report.replay_misses = misses
        bound = cfg.eps_pos + cfg.reach_threshold
        full = wps.shape[0] == cfg.waypoint_count
        ok = bool(np.all(misses <= bound))
        report.certified = ok and full
        mission = Mission(waypoints=wps, reach_threshold=cfg.reach_threshold)
        score = (wps.shape[0], -float(np.max(misses)))
        if best is None or score > best[0]:
            best = (score, mission, report)
        if report.certified:
            return mission, report

    warnings.warn(f"splice: no certified {cfg.waypoint_count}-waypoint chain found in "
                  f"{cfg.max_attempts} attempts; returning best with "
                  f"{best[1].waypoints.shape[0]} waypoints")
    return best[1], best[2]
