"""Planar-plus-depth robot kinematics.

Conventions used throughout the package:
  * world frame: x/y in meters, yaw measured CCW from +x, wrapped to (-pi, pi]
  * z is depth in meters, positive down; the water surface is z = 0
  * pitch is positive nose-up, clamped to [-pi/4, pi/4]
  * positive yaw rate turns anti-clockwise (left), positive pitch rate climbs
"""

import math
from dataclasses import dataclass, replace

import numpy as np

PITCH_LIMIT = math.pi / 4

# Actuator rates may change by at most the full rate limit per 0.5 s.
SLEW_WINDOW = 0.5

CONTROL_DT = 1.0 / 6.0  # 6 Hz control rate
CRUISE_SPEED = 0.41  # m/s, constant per episode
RATE_PER_CLASS = math.radians(10.0)  # rad/s per action class step
MAX_TURN_RATE = 3 * RATE_PER_CLASS  # class range spans the actuator range


def wrap_angle(a):
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float  # depth, positive down
    yaw: float
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))
        object.__setattr__(self, "pitch", float(np.clip(self.pitch, -PITCH_LIMIT, PITCH_LIMIT)))

    def planar(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    speed: float  # forward speed (m/s), constant per episode
    yaw_rate: float = 0.0
    pitch_rate: float = 0.0
    max_yaw_rate: float = math.pi / 6
    max_pitch_rate: float = math.pi / 6

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        object.__setattr__(self, "yaw_rate", float(np.clip(self.yaw_rate, -self.max_yaw_rate, self.max_yaw_rate)))
        object.__setattr__(self, "pitch_rate", float(np.clip(self.pitch_rate, -self.max_pitch_rate, self.max_pitch_rate)))


def step_dynamics(state, yaw_cmd, pitch_cmd, dt, current=(0.0, 0.0)):
    """Advance the robot one control interval.

    Commands are rate requests (rad/s); they saturate at the actuator limits
    and the actuator state slews toward them at most one full limit per
    SLEW_WINDOW seconds. The robot then moves speed*dt along its new heading,
    plus ambient current drift. Distance traveled in still water is exactly
    speed*dt.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")

    yaw_cmd = float(np.clip(yaw_cmd, -state.max_yaw_rate, state.max_yaw_rate))
    pitch_cmd = float(np.clip(pitch_cmd, -state.max_pitch_rate, state.max_pitch_rate))

    max_dyaw = state.max_yaw_rate * dt / SLEW_WINDOW
    max_dpitch = state.max_pitch_rate * dt / SLEW_WINDOW
    yaw_rate = state.yaw_rate + float(np.clip(yaw_cmd - state.yaw_rate, -max_dyaw, max_dyaw))
    pitch_rate = state.pitch_rate + float(np.clip(pitch_cmd - state.pitch_rate, -max_dpitch, max_dpitch))

    pose = state.pose
    yaw = wrap_angle(pose.yaw + yaw_rate * dt)
    pitch = float(np.clip(pose.pitch + pitch_rate * dt, -PITCH_LIMIT, PITCH_LIMIT))

    # Move along the updated heading; pitch trades horizontal for vertical speed.
    horiz = state.speed * math.cos(pitch)
    x = pose.x + (horiz * math.cos(yaw) + current[0]) * dt
    y = pose.y + (horiz * math.sin(yaw) + current[1]) * dt
    z = pose.z - state.speed * math.sin(pitch) * dt  # pitch up reduces depth

    new_pose = Pose(x=x, y=y, z=z, yaw=yaw, pitch=pitch)
    return replace(state, pose=new_pose, yaw_rate=yaw_rate, pitch_rate=pitch_rate)


def make_robot_state(pose, speed=CRUISE_SPEED, yaw_rate=0.0, pitch_rate=0.0):
    return RobotState(pose=pose, speed=speed, yaw_rate=yaw_rate, pitch_rate=pitch_rate,
                      max_yaw_rate=MAX_TURN_RATE, max_pitch_rate=MAX_TURN_RATE)
