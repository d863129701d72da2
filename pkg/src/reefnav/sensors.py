"""Synthetic sensors: forward ray-cast camera, downward survey fan, sonar,
compass/gyro/depth, and an unscaled odometry point-cloud source.

Forward grid layout: row 0 is the top of the view (+elevation), column 0 is
the leftmost (+azimuth, anti-clockwise). Channels are
[open_water, coral, sand, obstacle, distance/range_max].

The downward camera frame has z along the optical axis (straight down,
gravity-stabilized), x along the robot heading. The odometry point cloud is
expressed in this frame and scaled by a hidden, slowly drifting factor the
estimator must recover.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .world import CORAL, ROCK, SAND, raycast

GRID_W = 32
GRID_H = 24
HFOV = math.radians(120.0)
VFOV = math.radians(60.0)
RANGE_MAX = 10.0

DOWN_N = 9  # 9x9 downward fan
DOWN_HALF_ANGLE = math.radians(30.0)
DOWN_RANGE = 20.0
SONAR_APERTURE = math.radians(30.0)

CH_OPEN, CH_CORAL, CH_SAND, CH_OBST, CH_DIST = 0, 1, 2, 3, 4
N_CHANNELS = 5
_CLASS_TO_CHANNEL = {SAND: CH_SAND, CORAL: CH_CORAL, ROCK: CH_OBST}


@dataclass
class Observation:
    forward_grid: np.ndarray  # (GRID_H, GRID_W, 5) float32
    down_coral_fraction: float
    range_max: float = RANGE_MAX

    def as_input(self):
        """Channels-first float64 view for the policy network: (5, H, W)."""
        return self.forward_grid.astype(np.float64).transpose(2, 0, 1)


def _forward_dirs(yaw, pitch):
    az = np.linspace(HFOV / 2, -HFOV / 2, GRID_W)
    el = np.linspace(VFOV / 2, -VFOV / 2, GRID_H)
    elg, azg = np.meshgrid(el, az, indexing="ij")
    d = np.stack([np.cos(elg) * np.cos(azg),
                  np.cos(elg) * np.sin(azg),
                  np.sin(elg)], axis=-1).reshape(-1, 3)
    cp, sp = math.cos(pitch), math.sin(pitch)
    ry = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])  # nose-up pitch
    cy, sy = math.cos(yaw), math.sin(yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return d @ ry.T @ rz.T


def _down_dirs_cam():
    """Downward-camera ray directions in the camera frame (z = optical axis)."""
    t = np.tan(np.linspace(-DOWN_HALF_ANGLE, DOWN_HALF_ANGLE, DOWN_N))
    tu, tv = np.meshgrid(t, t, indexing="ij")
    d = np.stack([tu, tv, np.ones_like(tu)], axis=-1).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


_DOWN_CAM = _down_dirs_cam()


def _down_dirs_world(yaw):
    # camera x = heading, y = right of heading, z = straight down
    cy, sy = math.cos(yaw), math.sin(yaw)
    heading = np.array([cy, sy, 0.0])
    right = np.array([sy, -cy, 0.0])
    down = np.array([0.0, 0.0, -1.0])
    return _DOWN_CAM @ np.stack([heading, right, down])


def render_observation(world, pose):
    """Ray-cast the forward class/distance grid and the downward coral fraction."""
    if not world.in_bounds(pose.x, pose.y):
        raise ValueError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside world extent {world.extent}")

    origin = np.array([pose.x, pose.y, -pose.z])
    hit, dist, cls = raycast(world, origin, _forward_dirs(pose.yaw, pose.pitch), RANGE_MAX)

    grid = np.zeros((GRID_H * GRID_W, N_CHANNELS), dtype=np.float64)
    grid[~hit, CH_OPEN] = 1.0
    for wcls, ch in _CLASS_TO_CHANNEL.items():
        grid[hit & (cls == wcls), ch] = 1.0
    grid[:, CH_DIST] = np.where(hit, dist / RANGE_MAX, 1.0)

    dhit, _, dcls = raycast(world, origin, _down_dirs_world(pose.yaw), DOWN_RANGE)
    frac = float(np.mean(dhit & (dcls == CORAL)))

    return Observation(forward_grid=grid.reshape(GRID_H, GRID_W, N_CHANNELS).astype(np.float32),
                       down_coral_fraction=frac)


@dataclass
class SensorNoise:
    compass_std: float = 0.02  # rad
    gyro_std: float = 0.01  # rad/s
    depth_std: float = 0.02  # m
    sonar_std: float = 0.05  # m
    odom_std: float = 0.01  # m per keyframe
    dropout_prob: float = 0.02
    sand_dropout: bool = True  # odometry fails over feature-poor sand
    sand_fraction_for_dropout: float = 0.9
    scale_init: float = 1.5  # hidden odometry scale at episode start
    scale_drift_std: float = 0.002  # per-step log-scale random walk


@dataclass
class SensorBundle:
    compass_yaw: float
    gyro_yaw_rate: float
    depth_meas: float
    sonar_range: float
    aperture: float
    point_cloud: np.ndarray  # (N, 3) camera frame, empty iff dropout_flag
    odom_delta: np.ndarray | None  # (3,) scaled world-frame keyframe displacement
    dropout_flag: bool


@dataclass
class SensorSuite:
    """Noise configuration plus the hidden odometry-scale state for one episode."""

    noise: SensorNoise = field(default_factory=SensorNoise)
    hidden_scale: float = None

    def __post_init__(self):
        if self.hidden_scale is None:
            self.hidden_scale = self.noise.scale_init

    def reset(self, scale=None):
        self.hidden_scale = self.noise.scale_init if scale is None else scale

    def sense(self, world, state, prev_state, rng):
        n = self.noise
        pose, prev = state.pose, prev_state.pose
        self.hidden_scale *= math.exp(rng.normal(0.0, 1.0) * n.scale_drift_std)

        compass = pose.yaw + rng.normal(0.0, 1.0) * n.compass_std
        gyro = state.yaw_rate + rng.normal(0.0, 1.0) * n.gyro_std
        depth = pose.z + rng.normal(0.0, 1.0) * n.depth_std

        # Downward fan: distances along each ray, reused for sonar and cloud.
        # Finer march than the camera grid; sonar range error stays ~5 cm.
        origin = np.array([pose.x, pose.y, -pose.z])
        dhit, ddist, dcls = raycast(world, origin, _down_dirs_world(pose.yaw),
                                    DOWN_RANGE, step=0.1)

        axis_angle = np.arccos(np.clip(_DOWN_CAM[:, 2], -1.0, 1.0))
        in_beam = axis_angle <= SONAR_APERTURE + 1e-9
        beam_hits = dhit & in_beam
        if beam_hits.any():
            sonar = float(np.mean(ddist[beam_hits])) + rng.normal(0.0, 1.0) * n.sonar_std
        else:
            sonar = float("nan")

        sand_frac = float(np.mean(dhit & (dcls == SAND)))
        dropout = rng.random() < n.dropout_prob
        if n.sand_dropout and sand_frac >= n.sand_fraction_for_dropout:
            dropout = True

        if dropout:
            cloud = np.zeros((0, 3))
            odom_delta = None
        else:
            cloud = self.hidden_scale * ddist[dhit, None] * _DOWN_CAM[dhit]
            true_delta = np.array([pose.x - prev.x, pose.y - prev.y, pose.z - prev.z])
            odom_delta = self.hidden_scale * (true_delta + rng.normal(0.0, 1.0, 3) * n.odom_std)

        return SensorBundle(compass_yaw=compass, gyro_yaw_rate=gyro, depth_meas=depth,
                            sonar_range=sonar, aperture=SONAR_APERTURE, point_cloud=cloud,
                            odom_delta=odom_delta, dropout_flag=dropout)
