"""Goal-conditioned coral-survey navigation at desk scale: a deterministic
2.5D underwater simulator, a scripted labelling expert, behavioural cloning
with entropy-regularized discrete heads, hindsight goal relabeling,
uncertainty-gated exploration, sonar-scaled odometry with EKF fusion, and
spliced-waypoint mission evaluation against a greedy baseline."""

from .dynamics import CONTROL_DT, CRUISE_SPEED, Pose, RobotState, step_dynamics
from .expert import ActionLabel, ExpertConfig, collect_bc_dataset, expert_action
from .explore import ExploreConfig, ExploreState, explore_step, gate_weight, mix
from .hindsight import (GoalSample, Trajectory, diff, relabel_batch,
                        store_append, store_load, store_save)
from .metrics import TrialResult, coral_visibility
from .mission import Mission, SpliceConfig, greedy_policy, run_mission, splice_waypoints
from .policy import (ActionHeads, NetArch, PolicyNet, decode_action,
                     gradient_check, load_checkpoint, save_checkpoint)
from .sensors import Observation, SensorBundle, SensorNoise, SensorSuite, render_observation
from .state_estimation import (Ekf, EkfConfig, ScaleEstimator, estimate_scale,
                               select_beam_points)
from .training import TrainConfig, train_bc, train_gc
from .world import World, WorldParams, generate_world

__version__ = "0.1.0"
