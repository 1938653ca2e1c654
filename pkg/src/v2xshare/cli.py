"""Command-line entry point.

Subcommands mirror the experiment pipeline: meta-train produces a shared
initialization, adapt fine-tunes it in one task, evaluate measures a
policy, study reproduces the figure datasets, calibrate reports the
delivery bonus for a task. Every run writes a manifest with the fully
resolved configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import meta as meta_mod
from . import studies
from .config import (
    ConfigError,
    RunConfig,
    emit_config,
    load_config,
    validate_schedule_against_set,
    write_manifest,
)
from .csvio import write_csv
from .environment import calibrate_upsilon
from .meta import (
    EVAL_GRIDS,
    EvalSpec,
    fair_outer_loops,
    generate_task_set,
    load_meta_checkpoint,
    save_meta_checkpoint,
)

EVAL_HEADER = ["episode", "cumulative_reward", "v2i_sum_rate_bps", "success_rate"]
TRAIN_CURVE_HEADER = ["outer_loop", "task_id", "mean_cumulative_reward",
                      "v2i_sum_rate", "v2v_success_prob"]
EPISODE_LOG_HEADER_BASE = ["episode", "slot", "agent", "band", "power_dBm"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="v2xshare",
        description="Spectrum-sharing experiments for vehicular networks",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("meta-train", "adapt", "evaluate", "study", "calibrate"):
        p = sub.add_parser(mode)
        p.add_argument("--config", help="YAML config file (empty file = defaults)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("--desk", action="store_true", help="scaled-down desk profile")
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--print-resolved", action="store_true",
            help="dump the effective config and exit",
        )
        if mode == "adapt":
            p.add_argument("--checkpoint", required=True, help="meta checkpoint to start from")
        if mode == "evaluate":
            p.add_argument("--checkpoint", help="checkpoint to evaluate")
            p.add_argument(
                "--policy", default="checkpoint",
                choices=["checkpoint", "random", "maxv2v"],
            )
            p.add_argument("--log-episodes", action="store_true",
                           help="also write the per-slot episode log")
        if mode == "study":
            p.add_argument("--which", required=True,
                           choices=["fig3", "fig45", "fig6", "fig7"])
            p.add_argument(
                "--checkpoint", action="append", default=[],
                help="meta checkpoint, either PATH or NAME=PATH (repeatable)",
            )
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.jobs is not None:
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    if args.desk:
        cfg = dataclasses.replace(cfg, desk=True)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg.with_desk_profile()


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.print_resolved:
            sys.stdout.write(emit_config(cfg))
            return 0
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        handler = {
            "meta-train": cmd_meta_train,
            "adapt": cmd_adapt,
            "evaluate": cmd_evaluate,
            "study": cmd_study,
            "calibrate": cmd_calibrate,
        }[args.mode]
        return handler(cfg, args, out)
    except (ConfigError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _checkpoint_map(args):
    ckpts = {}
    for i, spec in enumerate(args.checkpoint):
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = f"ckpt{i}" if i else "meta", spec
        ckpts[name] = path
    return ckpts


def cmd_meta_train(cfg, args, out):
    task_set = generate_task_set(cfg.task_set)
    validate_schedule_against_set(cfg, len(task_set))
    n_out = cfg.outer_loops
    if n_out is None:
        n_out = fair_outer_loops(len(task_set), cfg.tasks_per_loop, cfg.samples_per_task)
    eval_set = generate_task_set(EVAL_GRIDS[cfg.task_set], provenance="held-out")
    eval_spec = EvalSpec(
        task_set=eval_set,
        every=cfg.eval_every,
        n_tasks=min(cfg.eval_tasks, len(eval_set)),
        adapt_loops=cfg.adapt_loops,
        eval_episodes=cfg.eval_episodes,
    )
    def progress(loop, score, train_reward):
        line = f"outer loop {loop}/{n_out}  train reward {train_reward:.2f}"
        if score is not None:
            line += f"  held-out eval {score:.2f}"
        print(line, flush=True)

    state = meta_mod.meta_train(
        task_set, cfg.seed, n_out, cfg.tasks_per_loop, schedule=cfg.schedule(),
        inner_lr=cfg.learning_rate, outer_lr=cfg.meta_step_size,
        value_scale=cfg.value_scale, eval_spec=eval_spec, jobs=cfg.jobs,
        progress=progress,
    )
    ckpt_path = out / "meta_checkpoint.json"
    save_meta_checkpoint(ckpt_path, state, task_set, cfg.schedule(), cfg.tasks_per_loop)
    studies.write_meta_curve(state.history, out / "fig2.csv")
    write_csv(out / "training_curve.csv", TRAIN_CURVE_HEADER, state.training_rows)
    write_manifest(out / "manifest.json", cfg, {
        "mode": "meta-train",
        "outer_loops_resolved": n_out,
        "task_set_size": len(task_set),
        "eval_set_size": len(eval_set),
    })
    print(f"wrote {ckpt_path}")
    return 0


def cmd_adapt(cfg, args, out):
    actor, critic, _ = load_meta_checkpoint(args.checkpoint)
    task = cfg.task()
    result = ev.adapt(
        actor, critic, task, np.random.SeedSequence(cfg.seed), cfg.adapt_loops,
        cfg.schedule(), upsilon=cfg.completion_bonus,
    )
    state = meta_mod.MetaState(result.actor, result.critic, 0,
                               cfg.learning_rate, cfg.meta_step_size)
    save_meta_checkpoint(
        out / "adapted_checkpoint.json", state,
        meta_mod.TaskSet([task], "adaptation-task"), cfg.schedule(), 1,
    )
    rows = [
        {"episode": (s["loop"]) * cfg.trajectories_per_loop, "variant": "adapt",
         "metric": "mean_cumulative_reward", "mean": s["mean_cumulative_reward"]}
        for s in result.loop_stats
    ]
    write_csv(out / "adaptation_curve.csv", studies.FIG67_HEADER, rows)
    write_csv(out / "training_curve.csv", TRAIN_CURVE_HEADER, [
        {"outer_loop": s["loop"], "task_id": 0,
         "mean_cumulative_reward": s["mean_cumulative_reward"],
         "v2i_sum_rate": s["mean_v2i_sum_rate_bps"],
         "v2v_success_prob": s["mean_success_rate"]}
        for s in result.loop_stats
    ])
    write_manifest(out / "manifest.json", cfg, {"mode": "adapt",
                                                "source_checkpoint": args.checkpoint})
    print(f"wrote {out / 'adapted_checkpoint.json'}")
    return 0


def cmd_evaluate(cfg, args, out):
    task = cfg.task()
    if args.policy == "random":
        policy = ev.RandomPolicy()
        label = "random"
    elif args.policy == "maxv2v":
        policy = ev.MaxV2VPolicy(cfg.search_budget)
        label = "maxV2V"
    else:
        if not args.checkpoint:
            raise ConfigError("evaluate needs --checkpoint unless --policy is random/maxv2v")
        actor, _, _ = load_meta_checkpoint(args.checkpoint)
        policy = ev.policy_for(actor, cfg.eval_mode)
        label = f"checkpoint-{cfg.eval_mode}"
    report = ev.evaluate_policy(
        policy, task, cfg.eval_episodes, np.random.SeedSequence(cfg.seed),
        upsilon=cfg.completion_bonus, collect_log=args.log_episodes,
    )
    write_csv(out / "eval_report.csv", EVAL_HEADER, [
        {k: r[k] for k in EVAL_HEADER} for r in report.rows
    ])
    if args.log_episodes:
        header = EPISODE_LOG_HEADER_BASE + [
            f"v2i_rate_bps_{b}" for b in range(task.n_bands)
        ] + ["v2v_rate_bps", "remaining_bits", "reward"]
        log_rows = [row for r in report.rows for row in r["log"]]
        write_csv(out / "episode_log.csv", header, log_rows)
    summary = {
        "policy": label,
        "n_episodes": report.n_episodes,
        "mean_cumulative_reward": report.mean_cumulative_reward,
        "mean_v2i_sum_rate_bps": report.mean_v2i_sum_rate_bps,
        "v2v_success_prob": report.success_probability,
        "ci95_v2i": report.ci95_v2i,
        "ci95_success": report.ci95_success,
    }
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out / "manifest.json", cfg, {"mode": "evaluate", "policy": label})
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_calibrate(cfg, args, out):
    task = cfg.task()
    upsilon = calibrate_upsilon(task, np.random.SeedSequence(cfg.seed))
    doc = {"task": task.factors(), "completion_bonus": upsilon}
    with open(out / "calibration.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    write_manifest(out / "manifest.json", cfg, {"mode": "calibrate"})
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_study(cfg, args, out):
    ckpts = _checkpoint_map(args)
    seeds = [cfg.seed + i for i in range(cfg.study_seeds)]
    schedule = cfg.schedule()
    task = cfg.task()
    if args.which == "fig45":
        meta_actor = meta_critic = None
        if ckpts:
            meta_actor, meta_critic, _ = load_meta_checkpoint(next(iter(ckpts.values())))
        needs_meta = {"meta-init"} & set(cfg.study_policies)
        if needs_meta and meta_actor is None:
            raise ConfigError("fig45 with a meta-init policy needs --checkpoint")
        grid = cfg.grid()
        mismatched_task = meta_mod.distance_variant_task(grid, 5) \
            if "mismatched" in cfg.study_policies else None
        rows = studies.payload_sweep(
            task, list(cfg.study_policies), list(cfg.payload_multiples), seeds,
            out / "fig45.csv", meta_actor=meta_actor, meta_critic=meta_critic,
            mismatched_task=mismatched_task, schedule=schedule,
            adapt_loops=cfg.adapt_loops, matched_episodes=cfg.matched_episodes,
            eval_episodes=cfg.eval_episodes, value_scale=cfg.value_scale,
            search_budget=cfg.search_budget, jobs=cfg.jobs,
        )
        written = ["fig45.csv"]
    elif args.which == "fig3":
        if not ckpts:
            raise ConfigError("fig3 needs --checkpoint")
        meta_actor, meta_critic, _ = load_meta_checkpoint(next(iter(ckpts.values())))
        rows = studies.gradient_step_sweep(
            meta_actor, meta_critic, task, seeds, out / "fig3.csv",
            schedule=schedule, adapt_loops=cfg.adapt_loops,
            eval_episodes=cfg.study_eval_episodes, jobs=cfg.jobs,
        )
        written = ["fig3.csv"]
    else:
        n_loops = cfg.study_adapt_episodes // cfg.study_update_every
        curve_schedule = dataclasses.replace(
            schedule, n_traj=cfg.study_update_every, n_inner=1
        )
        if args.which == "fig6":
            if len(ckpts) < 2:
                raise ConfigError("fig6 compares at least two checkpoints (NAME=PATH)")
            variants, task_for = {}, {}
            for name, path in ckpts.items():
                a, c, _ = load_meta_checkpoint(path)
                variants[name] = (a, c)
                task_for[name] = task
        else:  # fig7
            if not ckpts:
                raise ConfigError("fig7 needs --checkpoint")
            a, c, _ = load_meta_checkpoint(next(iter(ckpts.values())))
            grid = cfg.grid()
            variants, task_for = {}, {}
            for differ in (0, 1, 3, 5):
                name = f"differ{differ}"
                variants[name] = (a, c)
                task_for[name] = meta_mod.distance_variant_task(grid, differ)
        rep_seeds = [cfg.seed + i for i in range(cfg.study_repetitions)]
        rows, _ = studies.adaptation_curves(
            variants, task_for, rep_seeds, out / f"{args.which}_curves.csv",
            schedule=curve_schedule, n_loops=n_loops, eval_every=1,
            eval_episodes=cfg.study_eval_episodes, jobs=cfg.jobs,
        )
        written = [f"{args.which}_curves.csv"]
    write_manifest(out / "manifest.json", cfg, {
        "mode": "study", "which": args.which, "seeds": seeds,
        "checkpoints": ckpts, "rows_written": len(rows),
    })
    print(f"wrote {', '.join(written)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
