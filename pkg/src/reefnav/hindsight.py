"""Trajectory records, the append-only binary store, and hindsight relabeling.

Store layout (little-endian, documented byte-exactly in the README):
  header: magic b"RNAVTRAJ" | u32 version=1 | u32 grid_h | u32 grid_w |
          u32 channels | u32 trajectory_count
  per trajectory: u32 payload_length | payload | u32 crc32(payload)
  payload: u64 traj_seed | u8 collided | u32 frame_count | frames
  per frame: f64 x,y,z,yaw,pitch (true pose) | f64 ex,ey,ez,eyaw (estimated)
             | i8 yaw_class | i8 pitch_class
             | f32 cmd_yaw_rate, cmd_pitch_rate, act_yaw_rate, act_pitch_rate
             | f32 down_coral_fraction | f32 grid[grid_h*grid_w*channels]
Frame time indices are implicit (contiguous from 0).
"""

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Pose
from .sensors import GRID_H, GRID_W, N_CHANNELS, Observation

MAGIC = b"RNAVTRAJ"
VERSION = 1

_HEADER = struct.Struct("<8sIIIII")
_TRAJ_HEAD = struct.Struct("<QBI")
_FRAME_FIXED = struct.Struct("<9d2b5f")

GOAL_SCALE = 10.0  # meters; goal vectors are divided by this before the net


@dataclass
class Frame:
    observation: Observation
    pose: Pose  # ground truth
    est_pose: Pose  # on-board estimate used for relabeling
    yaw_class: int
    pitch_class: int
    time_index: int
    cmd_yaw_rate: float = 0.0  # executed rate commands, for open-loop replay
    cmd_pitch_rate: float = 0.0
    act_yaw_rate: float = 0.0  # actuator state after the step's slew
    act_pitch_rate: float = 0.0


@dataclass
class Trajectory:
    frames: list
    seed: int = 0
    collided: bool = False

    def __len__(self):
        return len(self.frames)

    @property
    def poses(self):
        return [f.pose for f in self.frames]


@dataclass(frozen=True)
class GoalSample:
    observation: Observation
    goal: np.ndarray  # (2,) meters, robot frame at time t
    yaw_class: int
    pitch_class: int
    traj_index: int
    t: int
    dt_steps: int


class TrajectoryStoreError(Exception):
    pass


def diff(pose_a, pose_b):
    """Planar displacement of b relative to a, in a's heading frame."""
    dx = pose_b.x - pose_a.x
    dy = pose_b.y - pose_a.y
    c, s = math.cos(pose_a.yaw), math.sin(pose_a.yaw)
    return np.array([c * dx + s * dy, -s * dx + c * dy])


def relabel_goal(traj, t, dt_steps, use_estimated=True):
    pa = traj.frames[t].est_pose if use_estimated else traj.frames[t].pose
    pb = traj.frames[t + dt_steps].est_pose if use_estimated else traj.frames[t + dt_steps].pose
    return diff(pa, pb)


def relabel_batch(trajectories, batch_size, tau, rng, use_estimated=True):
    """Sample goal-conditioned training tuples by hindsight relabeling.

    Uniformly picks (trajectory, t) with t < N-1, then a timestep gap
    dt ~ Uniform[1, min(tau, (N-1) - t)]; the goal is the relative pose the
    robot actually reached dt steps later, paired with the action it took
    at t. Trajectories with fewer than 2 frames are skipped.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    eligible = [(i, tr) for i, tr in enumerate(trajectories) if len(tr) >= 2]
    if not eligible:
        raise ValueError("no trajectory with at least 2 frames to relabel")

    samples = []
    picks = rng.integers(0, len(eligible), size=batch_size)
    for k in picks:
        idx, tr = eligible[k]
        n = len(tr)
        t = int(rng.integers(0, n - 1))
        hi = min(tau, (n - 1) - t)
        dt_steps = int(rng.integers(1, hi + 1))
        fr = tr.frames[t]
        samples.append(GoalSample(observation=fr.observation,
                                  goal=relabel_goal(tr, t, dt_steps, use_estimated),
                                  yaw_class=fr.yaw_class, pitch_class=fr.pitch_class,
                                  traj_index=idx, t=t, dt_steps=dt_steps))
    return samples


def _pack_trajectory(traj):
    parts = [_TRAJ_HEAD.pack(traj.seed & 0xFFFFFFFFFFFFFFFF, int(traj.collided), len(traj.frames))]
    for f in traj.frames:
        p, e = f.pose, f.est_pose
        parts.append(_FRAME_FIXED.pack(p.x, p.y, p.z, p.yaw, p.pitch,
                                       e.x, e.y, e.z, e.yaw,
                                       f.yaw_class, f.pitch_class,
                                       f.cmd_yaw_rate, f.cmd_pitch_rate,
                                       f.act_yaw_rate, f.act_pitch_rate,
                                       f.observation.down_coral_fraction))
        grid = np.ascontiguousarray(f.observation.forward_grid, dtype="<f4")
        parts.append(grid.tobytes())
    return b"".join(parts)


def _unpack_trajectory(payload, grid_shape):
    gh, gw, gc = grid_shape
    grid_bytes = gh * gw * gc * 4
    seed, collided, n_frames = _TRAJ_HEAD.unpack_from(payload, 0)
    off = _TRAJ_HEAD.size
    frames = []
    for t in range(n_frames):
        vals = _FRAME_FIXED.unpack_from(payload, off)
        off += _FRAME_FIXED.size
        grid = np.frombuffer(payload, dtype="<f4", count=gh * gw * gc, offset=off)
        off += grid_bytes
        obs = Observation(forward_grid=grid.reshape(gh, gw, gc).copy(),
                          down_coral_fraction=vals[15])
        frames.append(Frame(observation=obs,
                            pose=Pose(*vals[0:5]),
                            est_pose=Pose(vals[5], vals[6], vals[7], vals[8]),
                            yaw_class=vals[9], pitch_class=vals[10], time_index=t,
                            cmd_yaw_rate=vals[11], cmd_pitch_rate=vals[12],
                            act_yaw_rate=vals[13], act_pitch_rate=vals[14]))
    if off != len(payload):
        raise TrajectoryStoreError(f"trajectory payload size mismatch: {off} != {len(payload)}")
    return Trajectory(frames=frames, seed=seed, collided=bool(collided))


def store_save(path, trajectories, grid_shape=(GRID_H, GRID_W, N_CHANNELS)):
    """Write trajectories to a new store file (single writer)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid_shape[0], grid_shape[1],
                              grid_shape[2], len(trajectories)))
        for traj in trajectories:
            payload = _pack_trajectory(traj)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload)))


def store_append(path, trajectories, grid_shape=(GRID_H, GRID_W, N_CHANNELS)):
    """Append trajectories to an existing store (creates it if missing)."""
    try:
        existing = store_load(path)
    except FileNotFoundError:
        existing = []
    store_save(path, existing + list(trajectories), grid_shape)


def store_load(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TrajectoryStoreError(f"truncated header: file is {len(data)} bytes")
    magic, version, gh, gw, gc, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TrajectoryStoreError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TrajectoryStoreError(f"unsupported store version {version}")

    trajectories = []
    off = _HEADER.size
    for i in range(count):
        if off + 4 > len(data):
            raise TrajectoryStoreError(f"truncated at offset {off}: missing length for trajectory {i}")
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + length + 4 > len(data):
            raise TrajectoryStoreError(f"truncated at offset {off}: trajectory {i} needs "
                                       f"{length + 4} bytes, {len(data) - off} remain")
        payload = data[off:off + length]
        off += length
        (crc,) = struct.unpack_from("<I", data, off)
        off += 4
        if zlib.crc32(payload) != crc:
            raise TrajectoryStoreError(f"corrupt record: trajectory {i} failed checksum")
        trajectories.append(_unpack_trajectory(payload, (gh, gw, gc)))
    return trajectories
