"""Pipeline command-line interface.

Each subcommand runs one pipeline stage against a run directory; stages
validate their input artifacts and name anything missing. Exit code 0 means
the stage completed and any acceptance-relevant invariants it checks held.
"""

import argparse
import os
import sys
from dataclasses import replace

from . import pipeline
from .config import ConfigError, RunConfig, load_config

COMPARE_CORAL_MARGIN = 0.05
COMPARE_REACH_RATE = 0.8
COMPARE_TIME_RATIO = 2.5


def build_parser():
    parser = argparse.ArgumentParser(
        prog="reefnav",
        description="coral-survey navigation pipeline: simulate, clone, relabel, evaluate")
    parser.add_argument("--config", help="run configuration file (section.key = value)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", default="out", help="run directory for artifacts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("gen-world", "generate the world for this seed and write a summary"),
            ("collect-bc", "collect the scripted-expert behavioural cloning dataset"),
            ("train-bc", "train the behaviour policy on the BC dataset"),
            ("collect-explore", "roll out the behaviour policy with entropy-gated exploration"),
            ("train-gc", "train the goal-conditioned policy with hindsight relabeling"),
            ("splice", "generate realizable waypoint missions from recorded segments"),
            ("run-mission", "execute the spliced missions with the goal-conditioned policy"),
            ("compare", "30-trial paired comparison against the greedy-direct baseline"),
            ("plot", "render SVG plots from the run directory's CSV artifacts"),
            ("pipeline", "run every stage in order")):
        cmd = sub.add_parser(name, help=help_text)
        if name == "train-gc":
            cmd.add_argument("--fusion", choices=("multiply", "concat"),
                             help="goal fusion override for ablations")
    return parser


def run_command(command, cfg, out_dir, fusion=None):
    ok = True
    if command == "gen-world":
        world = pipeline.cmd_gen_world(cfg, out_dir)
        print(f"world seed {cfg.seed}: coral fraction {world.coral_fraction:.3f}")
    elif command == "collect-bc":
        dataset = pipeline.cmd_collect_bc(cfg, out_dir)
        n = sum(len(t) for t in dataset)
        print(f"collected {n} frames over {len(dataset)} episodes "
              f"({sum(t.collided for t in dataset)} collisions) -> {pipeline.BC_DATA}")
    elif command == "train-bc":
        report = pipeline.cmd_train_bc(cfg, out_dir)
        last = report[-1]
        print(f"behaviour policy: val yaw {last.val_yaw_acc:.3f} "
              f"pitch {last.val_pitch_acc:.3f} -> {pipeline.BC_CKPT}")
    elif command == "collect-explore":
        dataset = pipeline.cmd_collect_explore(cfg, out_dir)
        n = sum(len(t) for t in dataset)
        print(f"collected {n} exploration frames over {len(dataset)} episodes "
              f"-> {pipeline.EXPLORE_DATA}")
    elif command == "train-gc":
        report = pipeline.cmd_train_gc(cfg, out_dir, fusion=fusion)
        last = report[-1]
        print(f"goal-conditioned policy ({fusion or cfg.net.goal_fusion}): "
              f"val yaw {last.val_yaw_acc:.3f} pitch {last.val_pitch_acc:.3f}")
    elif command == "splice":
        paths = pipeline.cmd_splice(cfg, out_dir)
        print(f"wrote {len(paths)} spliced missions")
    elif command == "run-mission":
        summary, _ = pipeline.cmd_run_missions(cfg, out_dir)
        reached = sorted(row[3] for row in summary)
        median = reached[len(reached) // 2]
        collisions = sum(row[5] for row in summary)
        print(f"missions: median waypoints reached {median}/{summary[0][2]}, "
              f"total collisions {collisions}")
    elif command == "compare":
        report = pipeline.cmd_compare(cfg, out_dir)
        print(f"coral: goal-conditioned {report['gc_coral_mean']:.4f} vs "
              f"greedy {report['greedy_coral_mean']:.4f} "
              f"(margin {report['coral_margin']:+.4f})")
        print(f"reach rate {report['gc_reach_rate']:.2f}, time ratio {report['time_ratio']:.2f}")
        ok = (report["coral_margin"] >= COMPARE_CORAL_MARGIN
              and report["gc_reach_rate"] >= COMPARE_REACH_RATE
              and report["time_ratio"] <= COMPARE_TIME_RATIO)
        if not ok:
            print("comparison invariants FAILED", file=sys.stderr)
    elif command == "plot":
        made = pipeline.cmd_plot(cfg, out_dir)
        print(f"wrote {len(made)} plots")
    elif command == "pipeline":
        for stage in ("gen-world", "collect-bc", "train-bc", "collect-explore",
                      "train-gc", "splice", "run-mission", "compare", "plot"):
            print(f"== {stage} ==")
            ok = run_command(stage, cfg, out_dir) and ok
    else:
        raise ValueError(f"unknown command {command}")
    return ok


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        os.makedirs(args.out, exist_ok=True)
        ok = run_command(args.command, cfg, args.out, fusion=getattr(args, "fusion", None))
    except (ConfigError, pipeline.ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
