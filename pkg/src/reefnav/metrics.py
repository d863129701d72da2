"""Survey-quality metrics over observations and mission logs."""

from dataclasses import dataclass

import numpy as np

from .sensors import CH_CORAL, DOWN_N, GRID_H, GRID_W


def coral_visibility(observation):
    """Fraction of sensor rays intercepting coral this step: forward-grid
    coral cells and downward coral rays, equally weighted per ray."""
    n_forward = GRID_H * GRID_W
    n_down = DOWN_N * DOWN_N
    coral_fwd = float(observation.forward_grid[:, :, CH_CORAL].sum())
    coral_down = observation.down_coral_fraction * n_down
    return (coral_fwd + coral_down) / (n_forward + n_down)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    policy: str
    coral_series: tuple  # per-step coral visibility fractions
    cumulative_coral: float  # mean of the per-step fractions
    coral_sum: float  # raw sum over all executed steps
    waypoints_reached: int
    waypoints_total: int
    steps: int
    collisions: int

    @property
    def reached_all(self):
        return self.waypoints_reached == self.waypoints_total


def trial_result_from_log(log, trial=0):
    """Recompute a TrialResult purely from a mission log's step rows."""
    series = tuple(row.coral_fraction for row in log.rows)
    total = float(sum(series))
    mean = total / len(series) if series else 0.0
    return TrialResult(trial=trial, policy=log.policy_name, coral_series=series,
                       cumulative_coral=mean, coral_sum=total,
                       waypoints_reached=log.waypoints_reached,
                       waypoints_total=log.waypoints_total,
                       steps=len(series), collisions=int(log.collided))


def running_mean(series):
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        return arr
    return np.cumsum(arr) / np.arange(1, arr.size + 1)
