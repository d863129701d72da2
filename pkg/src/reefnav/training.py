"""Minibatch training for the behaviour and goal-conditioned policies."""

import math
from dataclasses import dataclass

import numpy as np

from .hindsight import relabel_batch

DEFAULT_TAU = 120  # max hindsight timestep gap (20 s at 6 Hz)


@dataclass(frozen=True)
class TrainConfig:
    label_smoothing: float = 0.1
    lambda_entropy: float = 0.01  # entropy-bonus weight
    lambda_decay: float = 1e-4  # L2 weight decay
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 25
    val_split: float = 0.2
    val_goal_samples: int = 2048  # size of the frozen goal-conditioned validation draw

    def __post_init__(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")
        if self.lambda_entropy < 0 or self.lambda_decay < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 < self.val_split < 1.0:
            raise ValueError("val_split must be in (0, 1)")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float  # mean per-sample loss over the epoch
    val_yaw_acc: float
    val_pitch_acc: float


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for key, g in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            self.params[key] -= self.lr * (self.m[key] / b1c) / (np.sqrt(self.v[key] / b2c) + self.eps)


def frames_to_arrays(trajectories):
    """Stack trajectory frames into network inputs and class labels."""
    xs, yaws, pitches = [], [], []
    for tr in trajectories:
        for f in tr.frames:
            xs.append(f.observation.as_input())
            yaws.append(f.yaw_class)
            pitches.append(f.pitch_class)
    return (np.stack(xs) if xs else np.zeros((0, 0, 0, 0)),
            np.array(yaws, dtype=np.int64), np.array(pitches, dtype=np.int64))


def goal_samples_to_arrays(samples):
    x = np.stack([s.observation.as_input() for s in samples])
    g = np.stack([s.goal for s in samples])
    yaw = np.array([s.yaw_class for s in samples], dtype=np.int64)
    pitch = np.array([s.pitch_class for s in samples], dtype=np.int64)
    return x, g, yaw, pitch


def _accuracy(net, x, goals, yaw, pitch, chunk=512):
    """Argmax accuracy per head, dropout disabled."""
    hit_y = hit_p = 0
    for lo in range(0, x.shape[0], chunk):
        hi = lo + chunk
        g = None if goals is None else goals[lo:hi]
        py, pp, _ = net.forward(x[lo:hi], g)
        hit_y += int(np.sum(py.argmax(axis=1) - 3 == yaw[lo:hi]))
        hit_p += int(np.sum(pp.argmax(axis=1) - 3 == pitch[lo:hi]))
    return hit_y / x.shape[0], hit_p / x.shape[0]


def _fit(net, cfg, n_train, batch_fn, eval_fn, rng):
    opt = Adam(net.params, lr=cfg.learning_rate)
    report = []
    batches = max(1, math.ceil(n_train / cfg.batch_size))
    for epoch in range(cfg.epochs):
        total, count = 0.0, 0
        for b in range(batches):
            x, g, yaw, pitch = batch_fn(epoch, b)
            loss, grads = net.loss_and_grads(
                x, g, yaw, pitch, label_smoothing=cfg.label_smoothing,
                lambda_entropy=cfg.lambda_entropy, lambda_decay=cfg.lambda_decay, rng=rng)
            if not math.isfinite(loss):
                raise RuntimeError(f"non-finite loss {loss} at epoch {epoch} batch {b}; "
                                   f"lr={cfg.learning_rate}, batch_size={x.shape[0]}")
            opt.step(grads)
            total += loss
            count += x.shape[0]
        acc_y, acc_p = eval_fn()
        report.append(EpochStats(epoch=epoch, train_loss=total / max(count, 1),
                                 val_yaw_acc=acc_y, val_pitch_acc=acc_p))
    return report


def split_trajectories(trajectories, val_split, rng):
    order = rng.permutation(len(trajectories))
    n_val = max(1, int(round(val_split * len(trajectories))))
    val_idx = set(order[:n_val].tolist())
    train = [t for i, t in enumerate(trajectories) if i not in val_idx]
    val = [t for i, t in enumerate(trajectories) if i in val_idx]
    return train, val


def train_bc(net, trajectories, cfg, rng):
    """Behavioural cloning on expert frames with an 80/20 frame split."""
    x, yaw, pitch = frames_to_arrays(trajectories)
    if x.shape[0] == 0:
        raise ValueError("no frames to train on")
    order = rng.permutation(x.shape[0])
    n_val = max(1, int(round(cfg.val_split * x.shape[0])))
    vi, ti = order[:n_val], order[n_val:]
    xt, yt, pt = x[ti], yaw[ti], pitch[ti]
    xv, yv, pv = x[vi], yaw[vi], pitch[vi]

    perm = {"idx": None}

    def batch_fn(epoch, b):
        if b == 0:
            perm["idx"] = rng.permutation(xt.shape[0])
        sel = perm["idx"][b * cfg.batch_size:(b + 1) * cfg.batch_size]
        return xt[sel], None, yt[sel], pt[sel]

    return _fit(net, cfg, xt.shape[0], batch_fn,
                lambda: _accuracy(net, xv, None, yv, pv), rng)


def train_gc(net, trajectories, cfg, rng, tau=DEFAULT_TAU, use_estimated=True):
    """Goal-conditioned training: trajectories are split 80/20, relabeled
    goals are resampled for every minibatch, and validation accuracy is
    measured on a single frozen relabeled draw from the held-out split."""
    train, val = split_trajectories(trajectories, cfg.val_split, rng)
    val_rng = np.random.default_rng(rng.integers(2 ** 63))
    val_samples = relabel_batch(val, cfg.val_goal_samples, tau, val_rng, use_estimated)
    xv, gv, yv, pv = goal_samples_to_arrays(val_samples)
    n_train = sum(len(t) for t in train)

    def batch_fn(epoch, b):
        samples = relabel_batch(train, cfg.batch_size, tau, rng, use_estimated)
        return goal_samples_to_arrays(samples)

    return _fit(net, cfg, n_train, batch_fn,
                lambda: _accuracy(net, xv, gv, yv, pv), rng)


def report_rows(report):
    return [(s.epoch, s.train_loss, s.val_yaw_acc, s.val_pitch_acc) for s in report]
