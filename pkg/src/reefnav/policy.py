"""Convolutional yaw/pitch policy with hand-derived gradients.

Architecture: two strided 3x3 conv layers, a dense feature layer with
dropout (kept active at rollout inference), an optional goal branch whose
output is fused with the feature vector by elementwise multiplication or
concatenation, and two 7-way softmax heads.

Loss per sample and head: cross-entropy against the label-smoothed target
minus an entropy bonus (weight lambda_entropy), so confident predictions on
ambiguous frames are penalized; an L2 weight-decay term (lambda_decay, on
weight matrices only) is added once per batch. Gradients are derived by
hand for exactly this architecture; `gradient_check` verifies them against
central finite differences.
"""

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

N_CLASSES = 7
CLASS_VALUES = np.arange(-3, 4, dtype=np.float64)

GOAL_MODES = ("none", "multiply", "concat")

CKPT_MAGIC = b"RNAVCKPT"
CKPT_VERSION = 1


@dataclass(frozen=True)
class ActionHeads:
    f_yaw: np.ndarray  # (7,) probabilities
    f_pitch: np.ndarray

    def expectations(self):
        """Expected class value <k> per head."""
        return float(CLASS_VALUES @ self.f_yaw), float(CLASS_VALUES @ self.f_pitch)


@dataclass(frozen=True)
class NetArch:
    in_channels: int = 5
    in_h: int = 24
    in_w: int = 32
    conv1_out: int = 8
    conv2_out: int = 16
    kernel: int = 3
    stride: int = 2
    feat_dim: int = 64
    goal_mode: str = "none"
    goal_dim: int = 2
    goal_scale: float = 10.0  # meters; goals divided by this before the branch
    dropout_rate: float = 0.1
    rate_per_class: float = math.radians(10.0)
    ema_beta: float = 0.6

    def conv_out_hw(self):
        h1 = (self.in_h - self.kernel) // self.stride + 1
        w1 = (self.in_w - self.kernel) // self.stride + 1
        h2 = (h1 - self.kernel) // self.stride + 1
        w2 = (w1 - self.kernel) // self.stride + 1
        return (h1, w1), (h2, w2)

    @property
    def flat_dim(self):
        (_, _), (h2, w2) = self.conv_out_hw()
        return self.conv2_out * h2 * w2

    @property
    def head_in_dim(self):
        return 2 * self.feat_dim if self.goal_mode == "concat" else self.feat_dim


def init_params(arch, rng):
    """He-style initialization; the goal bias starts at 1 so multiplicative
    fusion begins as an identity gate."""
    k = arch.kernel

    def he(shape, fan_in):
        return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)

    params = {
        "conv1_w": he((arch.conv1_out, arch.in_channels, k, k), arch.in_channels * k * k),
        "conv1_b": np.zeros(arch.conv1_out),
        "conv2_w": he((arch.conv2_out, arch.conv1_out, k, k), arch.conv1_out * k * k),
        "conv2_b": np.zeros(arch.conv2_out),
        "fc_w": he((arch.flat_dim, arch.feat_dim), arch.flat_dim),
        "fc_b": np.zeros(arch.feat_dim),
        "head_yaw_w": he((arch.head_in_dim, N_CLASSES), arch.head_in_dim),
        "head_yaw_b": np.zeros(N_CLASSES),
        "head_pitch_w": he((arch.head_in_dim, N_CLASSES), arch.head_in_dim),
        "head_pitch_b": np.zeros(N_CLASSES),
    }
    if arch.goal_mode != "none":
        params["goal_w"] = he((arch.goal_dim, arch.feat_dim), arch.goal_dim)
        params["goal_b"] = np.ones(arch.feat_dim)
    return params


WEIGHT_KEYS = ("conv1_w", "conv2_w", "fc_w", "goal_w", "head_yaw_w", "head_pitch_w")


def _conv_forward(x, w, b, stride):
    batch, _, _, _ = x.shape
    o, c, k, _ = w.shape
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]  # (B, C, oh, ow, k, k)
    oh, ow = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * oh * ow, c * k * k)
    out = cols @ w.reshape(o, -1).T + b
    out = out.reshape(batch, oh, ow, o).transpose(0, 3, 1, 2)
    return out, (x.shape, cols, w, stride, oh, ow)


def _conv_backward(dout, cache, need_dx=True):
    x_shape, cols, w, stride, oh, ow = cache
    batch, c, h, wid = x_shape
    o, _, k, _ = w.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dx = None
    if need_dx:
        dcols = (dflat @ w.reshape(o, -1)).reshape(batch, oh, ow, c, k, k)
        dx = np.zeros(x_shape)
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += \
                    dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return dx, dw, db


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - log_norm
    return np.exp(logp), logp


class PolicyNet:
    """Policy parameters plus the architecture descriptor."""

    def __init__(self, arch, params=None, rng=None):
        self.arch = arch
        if params is None:
            params = init_params(arch, rng or np.random.default_rng(0))
        self.params = params

    def forward(self, x, goals=None, dropout_mask=None, rng=None):
        """Batched forward pass.

        x: (B, C, H, W). goals: (B, goal_dim) in meters, required iff the
        architecture is goal-conditioned. Dropout applies when a mask is
        given or when an rng is supplied with a nonzero dropout rate; with
        neither, the pass is deterministic.
        Returns (p_yaw, p_pitch, cache).
        """
        arch, p = self.arch, self.params
        if x.ndim != 4 or x.shape[1:] != (arch.in_channels, arch.in_h, arch.in_w):
            raise ValueError(f"input shape {x.shape} does not match architecture "
                             f"(*, {arch.in_channels}, {arch.in_h}, {arch.in_w})")
        if (goals is not None) != (arch.goal_mode != "none"):
            raise ValueError("goal must be supplied exactly when the network is goal-conditioned")

        z1, c1 = _conv_forward(x, p["conv1_w"], p["conv1_b"], arch.stride)
        a1 = np.maximum(z1, 0.0)
        z2, c2 = _conv_forward(a1, p["conv2_w"], p["conv2_b"], arch.stride)
        a2 = np.maximum(z2, 0.0)
        flat = a2.reshape(x.shape[0], -1)
        z3 = flat @ p["fc_w"] + p["fc_b"]
        a3 = np.maximum(z3, 0.0)

        if dropout_mask is None and rng is not None and arch.dropout_rate > 0:
            keep = 1.0 - arch.dropout_rate
            dropout_mask = (rng.random(a3.shape) < keep) / keep
        feat = a3 if dropout_mask is None else a3 * dropout_mask

        if arch.goal_mode == "none":
            fused, gz, ga, gnorm = feat, None, None, None
        else:
            gnorm = np.asarray(goals, dtype=np.float64) / arch.goal_scale
            gz = gnorm @ p["goal_w"] + p["goal_b"]
            ga = np.maximum(gz, 0.0)
            fused = feat * ga if arch.goal_mode == "multiply" else np.concatenate([feat, ga], axis=1)

        py, logpy = _softmax(fused @ p["head_yaw_w"] + p["head_yaw_b"])
        pp, logpp = _softmax(fused @ p["head_pitch_w"] + p["head_pitch_b"])
        cache = dict(x=x, z1=z1, c1=c1, a1=a1, z2=z2, c2=c2, flat=flat, z3=z3, a3=a3,
                     mask=dropout_mask, feat=feat, gz=gz, ga=ga, gnorm=gnorm, fused=fused,
                     py=py, logpy=logpy, pp=pp, logpp=logpp)
        return py, pp, cache

    def act(self, obs, goal=None, rng=None):
        """Single-observation inference; dropout stays on when rng is given."""
        x = obs.as_input()[None]
        g = None if goal is None else np.asarray(goal, dtype=np.float64)[None]
        py, pp, _ = self.forward(x, g, rng=rng)
        return ActionHeads(f_yaw=py[0], f_pitch=pp[0])

    def loss_and_grads(self, x, goals, yaw_classes, pitch_classes,
                       label_smoothing=0.1, lambda_entropy=0.01, lambda_decay=1e-4,
                       dropout_mask=None, rng=None):
        """Summed batch loss and gradients for every parameter."""
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        arch, p = self.arch, self.params
        py, pp, cache = self.forward(x, goals, dropout_mask=dropout_mask, rng=rng)

        def targets(classes):
            t = np.full((x.shape[0], N_CLASSES), label_smoothing / N_CLASSES)
            t[np.arange(x.shape[0]), np.asarray(classes) + 3] += 1.0 - label_smoothing
            return t

        ty, tp = targets(yaw_classes), targets(pitch_classes)
        hy = -(py * cache["logpy"]).sum(axis=1)
        hp = -(pp * cache["logpp"]).sum(axis=1)
        loss = float(-(ty * cache["logpy"]).sum() - (tp * cache["logpp"]).sum()
                     - lambda_entropy * (hy.sum() + hp.sum()))
        for key in WEIGHT_KEYS:
            if key in p:
                loss += lambda_decay * float(np.sum(p[key] ** 2))

        # d/dlogits of [CE - lambda2*H]
        dly = (py - ty) + lambda_entropy * py * (cache["logpy"] + hy[:, None])
        dlp = (pp - tp) + lambda_entropy * pp * (cache["logpp"] + hp[:, None])

        grads = {}
        fused = cache["fused"]
        grads["head_yaw_w"] = fused.T @ dly
        grads["head_yaw_b"] = dly.sum(axis=0)
        grads["head_pitch_w"] = fused.T @ dlp
        grads["head_pitch_b"] = dlp.sum(axis=0)
        dfused = dly @ p["head_yaw_w"].T + dlp @ p["head_pitch_w"].T

        if arch.goal_mode == "none":
            dfeat, dga = dfused, None
        elif arch.goal_mode == "multiply":
            dfeat = dfused * cache["ga"]
            dga = dfused * cache["feat"]
        else:
            dfeat = dfused[:, :arch.feat_dim]
            dga = dfused[:, arch.feat_dim:]
        if dga is not None:
            dgz = dga * (cache["gz"] > 0)
            grads["goal_w"] = cache["gnorm"].T @ dgz
            grads["goal_b"] = dgz.sum(axis=0)

        da3 = dfeat if cache["mask"] is None else dfeat * cache["mask"]
        dz3 = da3 * (cache["z3"] > 0)
        grads["fc_w"] = cache["flat"].T @ dz3
        grads["fc_b"] = dz3.sum(axis=0)
        dflat = dz3 @ p["fc_w"].T
        da2 = dflat.reshape(cache["z2"].shape)
        dz2 = da2 * (cache["z2"] > 0)
        da1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(dz2, cache["c2"])
        dz1 = da1 * (cache["z1"] > 0)
        _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(dz1, cache["c1"], need_dx=False)

        for key in WEIGHT_KEYS:
            if key in p:
                grads[key] = grads[key] + 2.0 * lambda_decay * p[key]
        return loss, grads


class ActionSmoother:
    """Exponential temporal smoothing of decoded actuator rates."""

    def __init__(self, beta=0.6):
        self.beta = beta
        self.yaw_rate = 0.0
        self.pitch_rate = 0.0

    def reset(self):
        self.yaw_rate = 0.0
        self.pitch_rate = 0.0


def decode_action(heads, smoother, rate_per_class=math.radians(10.0), argmax=False):
    """Heads -> actuator rate commands (rad/s), exponentially smoothed."""
    if argmax:
        ey = float(CLASS_VALUES[int(np.argmax(heads.f_yaw))])
        ep = float(CLASS_VALUES[int(np.argmax(heads.f_pitch))])
    else:
        ey, ep = heads.expectations()
    smoother.yaw_rate = smoother.beta * smoother.yaw_rate + (1 - smoother.beta) * ey * rate_per_class
    smoother.pitch_rate = smoother.beta * smoother.pitch_rate + (1 - smoother.beta) * ep * rate_per_class
    return smoother.yaw_rate, smoother.pitch_rate


def gradient_check(net, x, goals, yaw_classes, pitch_classes, epsilon=1e-5, **loss_kw):
    """Max relative error between analytic and central-difference gradients,
    over every parameter entry. Relative error uses an absolute floor of
    1e-3 on the denominator so near-zero gradients are compared absolutely.
    """
    rng = np.random.default_rng(0)
    mask = None
    if net.arch.dropout_rate > 0:
        keep = 1.0 - net.arch.dropout_rate
        mask = (rng.random((x.shape[0], net.arch.feat_dim)) < keep) / keep
    _, grads = net.loss_and_grads(x, goals, yaw_classes, pitch_classes,
                                  dropout_mask=mask, **loss_kw)
    worst = 0.0
    for key, tensor in net.params.items():
        flat = tensor.ravel()
        gflat = grads[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp, _ = net.loss_and_grads(x, goals, yaw_classes, pitch_classes,
                                       dropout_mask=mask, **loss_kw)
            flat[i] = orig - epsilon
            lm, _ = net.loss_and_grads(x, goals, yaw_classes, pitch_classes,
                                       dropout_mask=mask, **loss_kw)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * epsilon)
            denom = max(abs(numeric) + abs(gflat[i]), 1e-3)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


_GOAL_MODE_CODE = {m: i for i, m in enumerate(GOAL_MODES)}

_CKPT_HEAD = struct.Struct("<8sI9IBI5d")


def _tensor_order(arch):
    order = ["conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b"]
    if arch.goal_mode != "none":
        order += ["goal_w", "goal_b"]
    return order + ["head_yaw_w", "head_yaw_b", "head_pitch_w", "head_pitch_b"]


def save_checkpoint(path, net):
    """Versioned binary checkpoint: descriptor header, then parameter tensors
    as little-endian float32 in the documented order."""
    a = net.arch
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION,
                                 a.in_channels, a.in_h, a.in_w, a.conv1_out, a.conv2_out,
                                 a.kernel, a.stride, a.feat_dim, a.goal_dim,
                                 _GOAL_MODE_CODE[a.goal_mode],
                                 N_CLASSES, a.goal_scale, a.dropout_rate,
                                 a.rate_per_class, a.ema_beta, 0.0))
        for key in _tensor_order(a):
            fh.write(np.ascontiguousarray(net.params[key], dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _CKPT_HEAD.size or data[:8] != CKPT_MAGIC:
        raise ValueError(f"{path} is not a policy checkpoint")
    (_, version, in_c, in_h, in_w, c1, c2, kernel, stride, feat, goal_dim,
     mode_code, n_classes, goal_scale, dropout, rate_per_class, beta, _pad) = \
        _CKPT_HEAD.unpack_from(data, 0)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if n_classes != N_CLASSES:
        raise ValueError(f"checkpoint has {n_classes} classes, expected {N_CLASSES}")
    arch = NetArch(in_channels=in_c, in_h=in_h, in_w=in_w, conv1_out=c1, conv2_out=c2,
                   kernel=kernel, stride=stride, feat_dim=feat,
                   goal_mode=GOAL_MODES[mode_code], goal_dim=goal_dim,
                   goal_scale=goal_scale, dropout_rate=dropout,
                   rate_per_class=rate_per_class, ema_beta=beta)

    shapes = {
        "conv1_w": (c1, in_c, kernel, kernel), "conv1_b": (c1,),
        "conv2_w": (c2, c1, kernel, kernel), "conv2_b": (c2,),
        "fc_w": (arch.flat_dim, feat), "fc_b": (feat,),
        "goal_w": (goal_dim, feat), "goal_b": (feat,),
        "head_yaw_w": (arch.head_in_dim, N_CLASSES), "head_yaw_b": (N_CLASSES,),
        "head_pitch_w": (arch.head_in_dim, N_CLASSES), "head_pitch_b": (N_CLASSES,),
    }
    params = {}
    off = _CKPT_HEAD.size
    for key in _tensor_order(arch):
        n = int(np.prod(shapes[key]))
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off)
        off += 4 * n
        params[key] = arr.reshape(shapes[key]).astype(np.float64)
    if off != len(data):
        raise ValueError(f"checkpoint size mismatch: read {off} of {len(data)} bytes")
    return PolicyNet(arch, params=params)
