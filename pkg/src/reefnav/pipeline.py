"""Artifact-level pipeline stages behind the CLI.

Every stage validates its input artifacts (naming anything missing), writes
versioned outputs into the run directory, and removes partial outputs on
failure. All CSVs open with a format-version comment line and a header row;
floats are serialized with repr() so files round-trip bit-exactly.
"""

import math
import os
from dataclasses import replace

import numpy as np

from .dynamics import CONTROL_DT, CRUISE_SPEED, Pose
from .expert import collect_bc_dataset, random_start_pose, training_trajectories
from .explore import run_explore_episode
from .hindsight import store_load, store_save
from .metrics import running_mean, trial_result_from_log
from .mission import (GreedyWaypointPolicy, Mission, NetWaypointPolicy,
                      run_mission, splice_waypoints)
from .policy import NetArch, PolicyNet, load_checkpoint, save_checkpoint
from .sensors import GRID_H, GRID_W, N_CHANNELS
from .svg import line_plot, world_overlay
from .training import report_rows, train_bc, train_gc
from .world import generate_world

CSV_VERSION = "# reefnav-csv v1"
MISSION_VERSION = "# reefnav-mission v1"

BC_DATA = "bc_data.traj"
BC_CKPT = "bc_policy.ckpt"
BC_REPORT = "bc_report.csv"
EXPLORE_DATA = "explore_data.traj"
GC_CKPT = "gc_policy.ckpt"
GC_REPORT = "gc_report.csv"


class ArtifactError(Exception):
    pass


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("#"):
        raise ArtifactError(f"{path}: missing format-version comment")
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    return header, rows


def require(out_dir, name, producer):
    path = os.path.join(out_dir, name)
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact {name!r} in {out_dir} (run `{producer}` first)")
    return path


class StageOutputs:
    """Deletes declared outputs if the stage body raises."""

    def __init__(self, *paths):
        self.paths = paths

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.paths:
                if os.path.exists(p):
                    os.remove(p)
        return False


def world_seeds(master_seed, count):
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(count)]


def cmd_gen_world(cfg, out_dir):
    world = generate_world(cfg.seed, cfg.world)
    txt = os.path.join(out_dir, "world.txt")
    svg = os.path.join(out_dir, "world.svg")
    with StageOutputs(txt, svg):
        with open(txt, "w") as fh:
            fh.write(f"seed = {cfg.seed}\n")
            fh.write(f"extent = {cfg.world.extent[0]},{cfg.world.extent[1]}\n")
            fh.write(f"coral_fraction = {repr(world.coral_fraction)}\n")
            fh.write(f"rock_cells = {len(world.rock_cells()[0])}\n")
        world_overlay(svg, world, [], title=f"world seed {cfg.seed}")
    return world


def cmd_collect_bc(cfg, out_dir):
    seeds = world_seeds(cfg.seed, cfg.collect.bc_worlds)
    worlds = [generate_world(s, cfg.world) for s in seeds]
    dataset = collect_bc_dataset(worlds, cfg.collect.bc_episodes, cfg.collect.bc_steps,
                                 seed=cfg.seed, cfg=cfg.expert)
    for ep, traj in enumerate(dataset):
        traj.seed = seeds[ep % len(seeds)]
    path = os.path.join(out_dir, BC_DATA)
    with StageOutputs(path):
        store_save(path, dataset)
    return dataset


def cmd_train_bc(cfg, out_dir):
    data_path = require(out_dir, BC_DATA, "collect-bc")
    dataset = training_trajectories(store_load(data_path))
    rng = np.random.default_rng([cfg.seed, 101])
    arch = NetArch(in_channels=N_CHANNELS, in_h=GRID_H, in_w=GRID_W,
                   feat_dim=cfg.net.feat_dim, dropout_rate=cfg.net.dropout_rate,
                   ema_beta=cfg.net.ema_beta)
    net = PolicyNet(arch, rng=rng)
    report = train_bc(net, dataset, cfg.train, rng)
    ckpt = os.path.join(out_dir, BC_CKPT)
    rpt = os.path.join(out_dir, BC_REPORT)
    with StageOutputs(ckpt, rpt):
        save_checkpoint(ckpt, net)
        write_csv(rpt, ("epoch", "train_loss", "val_yaw_acc", "val_pitch_acc"),
                  report_rows(report))
    return report


def cmd_collect_explore(cfg, out_dir, n_worlds=4):
    ckpt = require(out_dir, BC_CKPT, "train-bc")
    net = load_checkpoint(ckpt)
    seeds = world_seeds(cfg.seed + 1, n_worlds)
    worlds = [generate_world(s, cfg.world) for s in seeds]
    dataset = []
    for ep in range(cfg.collect.explore_episodes):
        world = worlds[ep % n_worlds]
        rng = np.random.default_rng([cfg.seed, 202, ep])
        start = random_start_pose(world, rng)
        traj = run_explore_episode(world, net, cfg.explore, rng,
                                   cfg.collect.explore_steps, start, noise=cfg.noise,
                                   ekf_cfg=cfg.ekf, seed=seeds[ep % n_worlds])
        dataset.append(traj)
    path = os.path.join(out_dir, EXPLORE_DATA)
    with StageOutputs(path):
        store_save(path, dataset)
    return dataset


def _gc_ckpt_name(fusion):
    return GC_CKPT if fusion == "multiply" else f"gc_policy_{fusion}.ckpt"


def cmd_train_gc(cfg, out_dir, fusion=None):
    data_path = require(out_dir, EXPLORE_DATA, "collect-explore")
    dataset = training_trajectories(store_load(data_path))
    fusion = fusion or cfg.net.goal_fusion
    rng = np.random.default_rng([cfg.seed, 303])
    arch = NetArch(in_channels=N_CHANNELS, in_h=GRID_H, in_w=GRID_W,
                   feat_dim=cfg.net.feat_dim, dropout_rate=cfg.net.dropout_rate,
                   ema_beta=cfg.net.ema_beta, goal_mode=fusion)
    net = PolicyNet(arch, rng=rng)
    report = train_gc(net, dataset, cfg.gc_train, rng, tau=cfg.hindsight.tau,
                      use_estimated=cfg.hindsight.use_estimated)
    ckpt = os.path.join(out_dir, _gc_ckpt_name(fusion))
    rpt = os.path.join(out_dir, GC_REPORT if fusion == "multiply" else f"gc_report_{fusion}.csv")
    with StageOutputs(ckpt, rpt):
        save_checkpoint(ckpt, net)
        write_csv(rpt, ("epoch", "train_loss", "val_yaw_acc", "val_pitch_acc"),
                  report_rows(report))
    return report


def write_mission(path, mission, world_seed, start_pose, certified):
    with open(path, "w") as fh:
        fh.write(MISSION_VERSION + "\n")
        fh.write(f"world_seed = {world_seed}\n")
        fh.write(f"start = {repr(start_pose.x)} {repr(start_pose.y)} {repr(start_pose.z)} "
                 f"{repr(start_pose.yaw)} {repr(start_pose.pitch)}\n")
        fh.write(f"threshold = {repr(mission.reach_threshold)}\n")
        fh.write(f"timeout = {repr(mission.waypoint_timeout)}\n")
        fh.write(f"certified = {int(certified)}\n")
        for wp in mission.waypoints:
            fh.write(f"waypoint = {repr(float(wp[0]))} {repr(float(wp[1]))}\n")


def read_mission(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != MISSION_VERSION:
        raise ArtifactError(f"{path}: not a mission file")
    fields = {}
    waypoints = []
    for ln in lines[1:]:
        key, val = [s.strip() for s in ln.split("=", 1)]
        if key == "waypoint":
            waypoints.append([float(v) for v in val.split()])
        else:
            fields[key] = val
    start_vals = [float(v) for v in fields["start"].split()]
    mission = Mission(waypoints=np.asarray(waypoints),
                      reach_threshold=float(fields["threshold"]),
                      waypoint_timeout=float(fields["timeout"]))
    return mission, int(fields["world_seed"]), Pose(*start_vals), bool(int(fields["certified"]))


def cmd_splice(cfg, out_dir):
    data_path = require(out_dir, EXPLORE_DATA, "collect-explore")
    dataset = training_trajectories(store_load(data_path))
    by_world = {}
    for tr in dataset:
        by_world.setdefault(tr.seed, []).append(tr)
    world_order = sorted(by_world)
    paths = []
    splice_cfg = replace(cfg.splice, reach_threshold=cfg.mission.reach_threshold)
    for k in range(cfg.mission.seeds):
        wseed = world_order[k % len(world_order)]
        rng = np.random.default_rng([cfg.seed, 404, k])
        mission, rep = splice_waypoints(by_world[wseed], splice_cfg, rng)
        path = os.path.join(out_dir, f"mission_{k:03d}.txt")
        with StageOutputs(path):
            write_mission(path, mission, wseed, rep.start_pose, rep.certified)
        paths.append(path)
    return paths


def mission_log_rows(log):
    rows = []
    for r in log.rows:
        rows.append((r.step, r.pose.x, r.pose.y, r.pose.z, r.pose.yaw, r.pose.pitch,
                     r.est_pose.x, r.est_pose.y, r.est_pose.z, r.est_pose.yaw,
                     r.waypoint_index, float(r.goal[0]), float(r.goal[1]),
                     r.yaw_expectation, r.pitch_expectation, r.coral_fraction,
                     int(r.collided)))
    return rows


MISSION_LOG_HEADER = ("step", "x", "y", "z", "yaw", "pitch", "est_x", "est_y", "est_z",
                      "est_yaw", "waypoint_index", "goal_x", "goal_y", "yaw_expect",
                      "pitch_expect", "coral_fraction", "collided")


def write_mission_log(path, log):
    rows = mission_log_rows(log)
    with open(path, "w") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write(f"# policy={log.policy_name} reached={log.waypoints_reached}"
                 f"/{log.waypoints_total} outcome={log.outcome} collided={int(log.collided)}\n")
        fh.write(",".join(MISSION_LOG_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


class LogView:
    """Mission log reconstructed from CSV, sufficient to recompute metrics."""

    class Row:
        def __init__(self, coral_fraction):
            self.coral_fraction = coral_fraction

    def __init__(self, policy_name, rows, waypoints_reached, waypoints_total,
                 collided, outcome):
        self.policy_name = policy_name
        self.rows = rows
        self.waypoints_reached = waypoints_reached
        self.waypoints_total = waypoints_total
        self.collided = collided
        self.outcome = outcome


def read_mission_log(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 3 or not lines[0].startswith("#") or not lines[1].startswith("#"):
        raise ArtifactError(f"{path}: not a mission log")
    meta = dict(part.split("=", 1) for part in lines[1][2:].split())
    reached, total = meta["reached"].split("/")
    header = lines[2].split(",")
    ci = header.index("coral_fraction")
    rows = [LogView.Row(float(ln.split(",")[ci])) for ln in lines[3:] if ln]
    return LogView(meta["policy"], rows, int(reached), int(total),
                   bool(int(meta["collided"])), meta["outcome"])


def cmd_run_missions(cfg, out_dir):
    ckpt = require(out_dir, _gc_ckpt_name(cfg.net.goal_fusion), "train-gc")
    net = load_checkpoint(ckpt)
    summary = []
    logs = []
    k = 0
    while os.path.exists(os.path.join(out_dir, f"mission_{k:03d}.txt")):
        mission, wseed, start, certified = read_mission(
            os.path.join(out_dir, f"mission_{k:03d}.txt"))
        world = generate_world(wseed, cfg.world)
        policy = NetWaypointPolicy(net, np.random.default_rng([cfg.seed, 505, k, 1]))
        rng = np.random.default_rng([cfg.seed, 505, k, 0])
        mission = Mission(waypoints=mission.waypoints,
                          reach_threshold=cfg.mission.reach_threshold,
                          waypoint_timeout=cfg.mission.waypoint_timeout)
        log = run_mission(world, policy, mission, rng, start,
                          ekf_cfg=cfg.ekf, use_estimated=cfg.mission.use_estimated,
                          smoother_beta=cfg.net.ema_beta)
        log_path = os.path.join(out_dir, f"mission_log_{k:03d}.csv")
        with StageOutputs(log_path):
            write_mission_log(log_path, log)
        summary.append((k, wseed, log.waypoints_total, log.waypoints_reached,
                        len(log.rows), int(log.collided), log.outcome, int(certified)))
        logs.append(log)
        k += 1
    if k == 0:
        raise ArtifactError(f"missing artifact 'mission_000.txt' in {out_dir} (run `splice` first)")
    path = os.path.join(out_dir, "missions_summary.csv")
    with StageOutputs(path):
        write_csv(path, ("mission", "world_seed", "waypoints_total", "waypoints_reached",
                         "steps", "collided", "outcome", "certified"), summary)
    return summary, logs


def _sample_goal(world, start, rng, dist_lo, dist_hi, margin=3.0):
    for _ in range(1000):
        ang = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(dist_lo, dist_hi)
        gx = start.x + dist * math.cos(ang)
        gy = start.y + dist * math.sin(ang)
        if margin <= gx <= world.extent[0] - margin and margin <= gy <= world.extent[1] - margin:
            return np.array([gx, gy])
    raise RuntimeError("could not sample a goal inside the world")


def compare_policies(net, cfg, out_dir=None):
    """Paired randomized trials of the goal-conditioned policy against the
    greedy direct baseline: identical worlds, starts, goals, and sensor
    seeds per trial."""
    results = {"goal-conditioned": [], "greedy-direct": []}
    logs = {"goal-conditioned": [], "greedy-direct": []}
    trial_meta = []
    for trial in range(cfg.compare.trials):
        wseed = int(np.random.SeedSequence([cfg.seed, 606, trial]).generate_state(1)[0])
        world = generate_world(wseed, cfg.world)
        setup_rng = np.random.default_rng([cfg.seed, 607, trial])
        start = random_start_pose(world, setup_rng, margin=6.0)
        goal = _sample_goal(world, start, setup_rng,
                            cfg.compare.goal_dist_min, cfg.compare.goal_dist_max)
        mission = Mission(waypoints=goal[None], reach_threshold=cfg.mission.reach_threshold,
                          waypoint_timeout=cfg.compare.timeout)
        trial_meta.append((trial, wseed, start, goal))
        for policy_name in ("goal-conditioned", "greedy-direct"):
            if policy_name == "goal-conditioned":
                policy = NetWaypointPolicy(net, np.random.default_rng([cfg.seed, 608, trial]))
            else:
                policy = GreedyWaypointPolicy()
            rng = np.random.default_rng([cfg.seed, 609, trial])  # sensor stream, shared
            log = run_mission(world, policy, mission, rng, start, ekf_cfg=cfg.ekf,
                              use_estimated=cfg.mission.use_estimated,
                              smoother_beta=cfg.net.ema_beta)
            results[policy_name].append(trial_result_from_log(log, trial))
            logs[policy_name].append(log)

    report = summarize_comparison(results)
    if out_dir is not None:
        _write_compare_artifacts(cfg, out_dir, results, logs, trial_meta, report)
    return results, logs, report


def summarize_comparison(results):
    gc, gd = results["goal-conditioned"], results["greedy-direct"]
    both = [(a, b) for a, b in zip(gc, gd) if a.reached_all and b.reached_all]
    mean_gc = float(np.mean([r.cumulative_coral for r in gc]))
    mean_gd = float(np.mean([r.cumulative_coral for r in gd]))
    time_ratio = (float(np.mean([a.steps for a, _ in both]))
                  / float(np.mean([b.steps for _, b in both]))) if both else float("inf")
    return {
        "trials": len(gc),
        "gc_coral_mean": mean_gc,
        "greedy_coral_mean": mean_gd,
        "coral_margin": mean_gc - mean_gd,
        "gc_reach_rate": float(np.mean([r.reached_all for r in gc])),
        "greedy_reach_rate": float(np.mean([r.reached_all for r in gd])),
        "time_ratio": time_ratio,
    }


def _series_table(results):
    """Per-step running-mean coral and raw cumulative sums, averaged over
    trials; finished trials hold their final value."""
    table = {}
    for name, rs in results.items():
        means = [running_mean(r.coral_series) for r in rs if len(r.coral_series)]
        sums = [np.cumsum(r.coral_series) for r in rs if len(r.coral_series)]
        n = max(len(m) for m in means)
        run = np.zeros(n)
        raw = np.zeros(n)
        for m, s in zip(means, sums):
            run += np.concatenate([m, np.full(n - len(m), m[-1])])
            raw += np.concatenate([s, np.full(n - len(s), s[-1])])
        table[name] = (run / len(means), raw / len(sums))
    return table


def _write_compare_artifacts(cfg, out_dir, results, logs, trial_meta, report):
    trials_csv = os.path.join(out_dir, "compare_trials.csv")
    series_csv = os.path.join(out_dir, "compare_series.csv")
    summary_csv = os.path.join(out_dir, "compare_summary.csv")
    coral_svg = os.path.join(out_dir, "compare_coral.svg")
    tracks_svg = os.path.join(out_dir, "compare_tracks.svg")
    with StageOutputs(trials_csv, series_csv, summary_csv, coral_svg, tracks_svg):
        rows = []
        for (trial, wseed, start, goal) in trial_meta:
            for name in ("goal-conditioned", "greedy-direct"):
                r = results[name][trial]
                rows.append((trial, wseed, name, int(r.reached_all), r.steps, r.collisions,
                             r.cumulative_coral, r.coral_sum, start.x, start.y,
                             float(goal[0]), float(goal[1])))
        write_csv(trials_csv, ("trial", "world_seed", "policy", "reached", "steps",
                               "collisions", "cumulative_coral", "coral_sum",
                               "start_x", "start_y", "goal_x", "goal_y"), rows)

        table = _series_table(results)
        n = max(len(v[0]) for v in table.values())
        series_rows = []
        for i in range(n):
            row = [i]
            for name in ("goal-conditioned", "greedy-direct"):
                run, raw = table[name]
                row.append(float(run[min(i, len(run) - 1)]))
                row.append(float(raw[min(i, len(raw) - 1)]))
            series_rows.append(tuple(row))
        write_csv(series_csv, ("step", "gc_running_mean", "gc_cumsum",
                               "greedy_running_mean", "greedy_cumsum"), series_rows)
        write_csv(summary_csv, ("metric", "value"), sorted(report.items()))

        steps = np.arange(n)
        line_plot(coral_svg,
                  [("goal-conditioned", steps, [r for r in table["goal-conditioned"][0]]),
                   ("greedy-direct", steps, [r for r in table["greedy-direct"][0]])],
                  title="Cumulative proportion of coral visible",
                  xlabel="step", ylabel="coral fraction")

        trial0 = trial_meta[0]
        world = generate_world(trial0[1], cfg.world)
        tracks = []
        for name in ("goal-conditioned", "greedy-direct"):
            xy = np.array([[r.pose.x, r.pose.y] for r in logs[name][0].rows])
            tracks.append((name, xy))
        world_overlay(tracks_svg, world, tracks, waypoints=trial0[3][None],
                      title=f"sample trial 0 (world {trial0[1]})")


def cmd_compare(cfg, out_dir):
    ckpt = require(out_dir, _gc_ckpt_name(cfg.net.goal_fusion), "train-gc")
    net = load_checkpoint(ckpt)
    _, _, report = compare_policies(net, cfg, out_dir=out_dir)
    return report


def cmd_plot(cfg, out_dir):
    made = []
    for name, out in ((BC_REPORT, "bc_training.svg"), (GC_REPORT, "gc_training.svg")):
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            header, rows = read_csv(path)
            epochs = [int(r[0]) for r in rows]
            svg_path = os.path.join(out_dir, out)
            line_plot(svg_path,
                      [("val_yaw_acc", epochs, [float(r[2]) for r in rows]),
                       ("val_pitch_acc", epochs, [float(r[3]) for r in rows])],
                      title=name, xlabel="epoch", ylabel="accuracy")
            made.append(svg_path)
    series = os.path.join(out_dir, "compare_series.csv")
    if os.path.exists(series):
        header, rows = read_csv(series)
        steps = [int(r[0]) for r in rows]
        svg_path = os.path.join(out_dir, "compare_coral.svg")
        line_plot(svg_path,
                  [("goal-conditioned", steps, [float(r[1]) for r in rows]),
                   ("greedy-direct", steps, [float(r[3]) for r in rows])],
                  title="Cumulative proportion of coral visible",
                  xlabel="step", ylabel="coral fraction")
        made.append(svg_path)
    k = 0
    while os.path.exists(os.path.join(out_dir, f"mission_log_{k:03d}.csv")):
        k += 1
    if k:
        missions = []
        for i in range(k):
            header, rows = read_csv_mission(os.path.join(out_dir, f"mission_log_{i:03d}.csv"))
            xi = header.index("x")
            missions.append((f"mission {i}", np.array([[float(r[xi]), float(r[xi + 1])]
                                                       for r in rows])))
        mission, wseed, _, _ = read_mission(os.path.join(out_dir, "mission_000.txt"))
        world = generate_world(wseed, cfg.world)
        svg_path = os.path.join(out_dir, "mission_tracks.svg")
        world_overlay(svg_path, world, missions[:3], waypoints=mission.waypoints,
                      title="spliced missions")
        made.append(svg_path)
    return made


def read_csv_mission(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    header = lines[2].split(",")
    rows = [ln.split(",") for ln in lines[3:] if ln]
    return header, rows
