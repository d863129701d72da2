"""Odometry scale recovery and EKF pose estimation.

The odometry source is metric only up to an unknown factor. Cloud points
inside the sonar beam cone (angle to the optical axis <= aperture) are
averaged and ratioed against the sonar range to estimate that factor; a
sliding-window mean smooths it. The EKF tracks (x, y, z, yaw) with a
constant-forward-speed prior driving the planar prediction and the gyro
driving yaw; compass, depth, and scaled odometry velocity measurements are
fused with a chi-square outlier gate. During odometry dropout the filter
degrades to compass/depth-aided dead reckoning.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .dynamics import wrap_angle


def select_beam_points(cloud, aperture):
    """Points whose angle to the optical axis z=(0,0,1) is within aperture."""
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if cloud.shape[0] == 0:
        return cloud
    norms = np.linalg.norm(cloud, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm point in cloud")
    ang = np.arccos(np.clip(cloud[:, 2] / norms, -1.0, 1.0))
    return cloud[ang <= aperture]


def estimate_scale(beam_points, sonar_range):
    """Mean beam-point distance over the sonar range; None if no points."""
    if sonar_range <= 0 or not math.isfinite(sonar_range):
        raise ValueError(f"sonar range must be positive, got {sonar_range}")
    pts = np.asarray(beam_points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        return None
    return float(np.mean(np.linalg.norm(pts, axis=1)) / sonar_range)


class ScaleEstimator:
    """Ring buffer of raw scale estimates with horizon-H mean smoothing."""

    def __init__(self, horizon=10, aperture=math.radians(30.0)):
        self.horizon = horizon
        self.aperture = aperture
        self.buffer = deque(maxlen=horizon)

    def update(self, cloud, sonar_range):
        """Feed one keyframe; returns the new raw estimate (None on no-beam)."""
        raw = estimate_scale(select_beam_points(cloud, self.aperture), sonar_range)
        if raw is not None:
            if raw <= 0:
                raise ValueError(f"non-positive scale estimate {raw}")
            self.buffer.append(raw)
        return raw

    def smoothed(self):
        if not self.buffer:
            return None
        return float(np.mean(self.buffer))


@dataclass(frozen=True)
class EkfConfig:
    speed_prior: float = 0.41  # commanded forward speed (m/s)
    q_pos: float = 0.02  # process noise, m^2/s
    q_depth: float = 0.02
    q_yaw: float = 0.001  # rad^2/s
    r_compass: float = 0.01  # rad^2
    r_depth: float = 0.01  # m^2
    r_odom_vel: float = 0.005  # (m/s)^2
    gate_quantile: float = 0.99
    init_var: float = 1e-4


class Ekf:
    """EKF over (x, y, z, yaw); z is depth, yaw wrapped to (-pi, pi]."""

    def __init__(self, init_pose, cfg=EkfConfig()):
        self.cfg = cfg
        self.mean = np.array([init_pose.x, init_pose.y, init_pose.z, init_pose.yaw])
        self.cov = np.eye(4) * cfg.init_var
        self.outliers = 0

    def predict(self, gyro_yaw_rate, dt):
        if dt <= 0:
            raise ValueError("dt must be positive")
        x, y, z, yaw = self.mean
        v = self.cfg.speed_prior
        self.mean = np.array([x + v * math.cos(yaw) * dt,
                              y + v * math.sin(yaw) * dt,
                              z,
                              wrap_angle(yaw + gyro_yaw_rate * dt)])
        # Covariance grows by process noise alone (random-walk model); the
        # position noise is sized to absorb the unmodeled yaw coupling.
        q = np.diag([self.cfg.q_pos, self.cfg.q_pos, self.cfg.q_depth, self.cfg.q_yaw]) * dt
        self.cov = self.cov + q

    def _update(self, innovation, h_jac, r):
        r = np.atleast_2d(np.asarray(r, dtype=np.float64))
        try:
            if np.any(np.linalg.eigvalsh(r) <= 0):
                raise ValueError("measurement covariance R must be positive definite")
        except np.linalg.LinAlgError:
            raise ValueError("measurement covariance R must be positive definite")
        s = h_jac @ self.cov @ h_jac.T + r
        m2 = float(innovation @ np.linalg.solve(s, innovation))
        if m2 > chi2.ppf(self.cfg.gate_quantile, df=len(innovation)):
            self.outliers += 1
            return False
        k = self.cov @ h_jac.T @ np.linalg.inv(s)
        self.mean = self.mean + k @ innovation
        self.mean[3] = wrap_angle(self.mean[3])
        ikh = np.eye(4) - k @ h_jac
        self.cov = ikh @ self.cov @ ikh.T + k @ r @ k.T  # Joseph form
        self.cov = 0.5 * (self.cov + self.cov.T)
        return True

    def update_compass(self, yaw_meas, r=None):
        h = np.array([[0.0, 0.0, 0.0, 1.0]])
        nu = np.array([wrap_angle(yaw_meas - self.mean[3])])
        return self._update(nu, h, r if r is not None else self.cfg.r_compass)

    def update_depth(self, depth_meas, r=None):
        h = np.array([[0.0, 0.0, 1.0, 0.0]])
        nu = np.array([depth_meas - self.mean[2]])
        return self._update(nu, h, r if r is not None else self.cfg.r_depth)

    def update_odom_velocity(self, vel_xy, r=None):
        """Scaled odometry planar velocity in the world frame (m/s).
        Modeled as the speed prior along the estimated heading, so the
        innovation corrects yaw (and flags speed inconsistency)."""
        v = self.cfg.speed_prior
        yaw = self.mean[3]
        pred = np.array([v * math.cos(yaw), v * math.sin(yaw)])
        h = np.zeros((2, 4))
        h[0, 3] = -v * math.sin(yaw)
        h[1, 3] = v * math.cos(yaw)
        rm = np.eye(2) * (r if r is not None else self.cfg.r_odom_vel)
        return self._update(np.asarray(vel_xy) - pred, h, rm)


@dataclass
class StateEstimator:
    """Per-rollout wrapper: scale recovery feeding the EKF each step."""

    ekf: Ekf
    scale: ScaleEstimator = field(default_factory=ScaleEstimator)
    dt: float = 1.0 / 6.0

    def step(self, bundle):
        self.ekf.predict(bundle.gyro_yaw_rate, self.dt)
        self.ekf.update_compass(bundle.compass_yaw)
        self.ekf.update_depth(bundle.depth_meas)
        if not bundle.dropout_flag and bundle.point_cloud.shape[0] > 0:
            if math.isfinite(bundle.sonar_range) and bundle.sonar_range > 0:
                self.scale.update(bundle.point_cloud, bundle.sonar_range)
            s = self.scale.smoothed()
            if s is not None and bundle.odom_delta is not None:
                self.ekf.update_odom_velocity(bundle.odom_delta[:2] / (s * self.dt))
        return self.pose_estimate()

    def pose_estimate(self):
        from .dynamics import Pose
        m = self.ekf.mean
        return Pose(x=m[0], y=m[1], z=m[2], yaw=m[3])
