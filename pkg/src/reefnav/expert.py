"""Scripted labelling expert.

Action coding for both yaw and pitch: the 7 classes {-3..3}, negative =
clockwise / downwards, positive = anti-clockwise / upwards. The expert
queries the world directly (positions hidden from the learner): it pitches
up and away from obstacles intruding into an avoidance cone, otherwise
steers the nearest visible coral toward the view center with a quantized
proportional rule, and falls back to a uniform random yaw over bare sand.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (CONTROL_DT, CRUISE_SPEED, RATE_PER_CLASS, Pose,
                       make_robot_state, step_dynamics, wrap_angle)
from .hindsight import Frame, Trajectory
from .sensors import CH_CORAL, CH_DIST, GRID_W, HFOV, render_observation
from .world import generate_world

ACTION_CLASSES = (-3, -2, -1, 0, 1, 2, 3)


@dataclass(frozen=True)
class ActionLabel:
    yaw_class: int
    pitch_class: int

    def __post_init__(self):
        if self.yaw_class not in ACTION_CLASSES or self.pitch_class not in ACTION_CLASSES:
            raise ValueError(f"classes must be in {ACTION_CLASSES}")

    def rates(self):
        return self.yaw_class * RATE_PER_CLASS, self.pitch_class * RATE_PER_CLASS


@dataclass(frozen=True)
class ExpertConfig:
    avoid_range: float = 3.0  # m
    avoid_half_angle: float = math.radians(30.0)
    clearance: float = 0.8  # terrain tops within this of robot depth trigger avoidance
    coral_range: float = 10.0
    coral_half_angle: float = math.radians(45.0)
    degrees_per_class: float = 15.0  # proportional quantizer gain
    perturb_prob: float = 0.2  # chance of +-1 jitter on the coral-steering label
    alt_low: float = 0.5
    alt_high: float = 1.5
    alt_lookahead: float = 2.0  # altitude control anticipates the floor ahead (m)
    edge_lookahead: float = 3.5  # steer back inside when about to leave the survey area


def _quantize(bearing, degrees_per_class):
    return int(np.clip(round(math.degrees(bearing) / degrees_per_class), -3, 3))


def _altitude_pitch(world, pose, cfg):
    # React to the floor ahead, not just below: rising terrain needs lead time.
    ax = pose.x + cfg.alt_lookahead * math.cos(pose.yaw)
    ay = pose.y + cfg.alt_lookahead * math.sin(pose.yaw)
    alt_here = world.altitude_of(pose.x, pose.y, pose.z)
    alt = alt_here
    if world.in_bounds(ax, ay):
        alt = min(alt, world.altitude_of(ax, ay, pose.z))
    if alt_here < 0.3:
        return 3
    if alt < 0.5 * cfg.alt_low:
        return 2
    if alt < cfg.alt_low:
        return 1
    if alt > cfg.alt_high and alt_here > cfg.alt_high:
        return -1
    return 0


def expert_action(world, pose, rng, cfg=ExpertConfig(), obs=None):
    """Label one frame with 7-class yaw/pitch actions.

    Obstacle avoidance, altitude hold, and the keep-in rule use privileged
    world queries; coral steering centers the coral visible in the camera
    view (the observation is rendered here if the caller has not already).
    """
    # Avoidance: any terrain whose top reaches within `clearance` of the
    # robot's depth, ahead inside the cone. Rocks dominate this set.
    rock_xy, rock_top = world.rock_cells()
    candidates = [(rock_xy, rock_top)]
    threat_bearings, threat_dists = [], []
    for xy, top in candidates:
        if len(xy) == 0:
            continue
        dx = xy[:, 0] - pose.x
        dy = xy[:, 1] - pose.y
        d = np.hypot(dx, dy)
        bearing = np.arctan2(dy, dx) - pose.yaw
        bearing = np.arctan2(np.sin(bearing), np.cos(bearing))
        mask = (d <= cfg.avoid_range) & (np.abs(bearing) <= cfg.avoid_half_angle) \
            & (top <= pose.z + cfg.clearance)
        threat_bearings.append(bearing[mask])
        threat_dists.append(d[mask])
    threat_bearings = np.concatenate(threat_bearings) if threat_bearings else np.array([])
    threat_dists = np.concatenate(threat_dists) if threat_dists else np.array([])

    if threat_dists.size:
        d_min = float(threat_dists.min())
        pitch_class = int(np.clip(math.ceil(2.0 * (cfg.avoid_range - d_min)), 1, 3))
        centroid = float(np.mean(threat_bearings))
        if abs(centroid) < 1e-9:
            yaw_class = int(rng.choice([-1, 1]))
        else:
            yaw_class = -1 if centroid > 0 else 1  # deflect away from the obstacle
        return ActionLabel(yaw_class=yaw_class, pitch_class=pitch_class)

    pitch_class = _altitude_pitch(world, pose, cfg)

    # Keep-in: turn back toward the survey area before running off the edge.
    ahead_x = pose.x + cfg.edge_lookahead * math.cos(pose.yaw)
    ahead_y = pose.y + cfg.edge_lookahead * math.sin(pose.yaw)
    if not world.in_bounds(ahead_x, ahead_y):
        to_center = math.atan2(0.5 * world.extent[1] - pose.y,
                               0.5 * world.extent[0] - pose.x)
        yaw_class = _quantize(wrap_angle(to_center - pose.yaw), cfg.degrees_per_class)
        if yaw_class == 0:
            yaw_class = 1
        return ActionLabel(yaw_class=yaw_class, pitch_class=pitch_class)

    if obs is None:
        obs = render_observation(world, pose)
    coral_cols = np.nonzero((obs.forward_grid[:, :, CH_CORAL] > 0).any(axis=0))[0]
    if coral_cols.size:
        # Bring the coral nearest the view center to the center: steer by the
        # azimuth of the most heading-aligned coral column. Straight over
        # coral, gentle turns toward off-center coral.
        az = np.linspace(HFOV / 2, -HFOV / 2, GRID_W)
        target = float(az[coral_cols[np.argmin(np.abs(az[coral_cols]))]])
        yaw_class = _quantize(target, cfg.degrees_per_class)
        if rng.random() < cfg.perturb_prob:
            yaw_class = int(np.clip(yaw_class + rng.choice([-1, 1]), -3, 3))
        return ActionLabel(yaw_class=yaw_class, pitch_class=pitch_class)

    # No coral anywhere in view: uniform random yaw.
    return ActionLabel(yaw_class=int(rng.integers(-3, 4)), pitch_class=pitch_class)


def random_start_pose(world, rng, margin=5.0, target_altitude=1.0):
    x = rng.uniform(margin, world.extent[0] - margin)
    y = rng.uniform(margin, world.extent[1] - margin)
    yaw = rng.uniform(-math.pi, math.pi)
    z = max(world.floor_depth_at(x, y) - target_altitude, 0.5)
    return Pose(x=x, y=y, z=z, yaw=wrap_angle(yaw))


def run_expert_episode(world, steps, rng, cfg=ExpertConfig(), speed=CRUISE_SPEED,
                       dt=CONTROL_DT, seed=0, start_pose=None):
    """Drive the expert for one episode, recording every step."""
    pose = start_pose or random_start_pose(world, rng)
    state = make_robot_state(pose, speed)
    frames = []
    collided = False
    for t in range(steps):
        obs = render_observation(world, state.pose)
        label = expert_action(world, state.pose, rng, cfg, obs=obs)
        yaw_cmd, pitch_cmd = label.rates()
        new_state = step_dynamics(state, yaw_cmd, pitch_cmd, dt, world.current)
        frames.append(Frame(observation=obs, pose=state.pose, est_pose=state.pose,
                            yaw_class=label.yaw_class, pitch_class=label.pitch_class,
                            time_index=t, cmd_yaw_rate=yaw_cmd, cmd_pitch_rate=pitch_cmd,
                            act_yaw_rate=new_state.yaw_rate,
                            act_pitch_rate=new_state.pitch_rate))
        state = new_state
        if state.pose.z < 0.0:  # never breach the surface
            clamped = Pose(state.pose.x, state.pose.y, 0.0, state.pose.yaw, state.pose.pitch)
            state = make_robot_state(clamped, state.speed, state.yaw_rate, state.pitch_rate)
        if not world.in_bounds(state.pose.x, state.pose.y):
            break  # left the survey area; keep what we have
        if world.altitude_of(state.pose.x, state.pose.y, state.pose.z) <= 0.0:
            collided = True
            break
    return Trajectory(frames=frames, seed=seed, collided=collided)


def collect_bc_dataset(worlds, episodes, steps, seed, cfg=ExpertConfig(),
                       speed=CRUISE_SPEED, dt=CONTROL_DT):
    """Label-by-demonstration dataset: `episodes` expert runs of `steps` steps,
    distributed round-robin over the given worlds. Collision episodes are
    flagged and retained; filter with `training_trajectories` before use.
    """
    if episodes < 0 or steps <= 0 and episodes > 0:
        raise ValueError("episodes must be >= 0 and steps positive")
    dataset = []
    for ep in range(episodes):
        world = worlds[ep % len(worlds)]
        rng = np.random.default_rng([seed, ep])
        dataset.append(run_expert_episode(world, steps, rng, cfg, speed, dt, seed=ep))
    return dataset


def training_trajectories(dataset, include_collisions=False):
    return [t for t in dataset if include_collisions or not t.collided]


def make_worlds(master_seed, count, params=None):
    return [generate_world(int(s), params)
            for s in np.random.SeedSequence(master_seed).generate_state(count)]
