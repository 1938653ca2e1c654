"""Experiment studies matching the evaluation figure families.

Each study executes a grid of independent (policy, task, seed) cells and
writes one CSV with a documented header:

  fig2.csv  : outer_loop, eval_mean_cumulative_reward
  fig3.csv  : gradient_step, metric, value, seed
  fig45.csv : payload_multiple, policy, metric, mean, ci95
  fig67.csv : episode, variant, metric, mean

Cells run in parallel; assembly is an ordered, deterministic merge.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import evaluation as ev
from .csvio import write_csv
from .environment import PAYLOAD_UNIT_BITS, calibrate_upsilon
from .meta import InnerSchedule
from .neuralnet import init_params, actor_architecture, critic_architecture
from .pool import run_cells

FIG2_HEADER = ["outer_loop", "eval_mean_cumulative_reward"]
FIG3_HEADER = ["gradient_step", "metric", "value", "seed"]
FIG45_HEADER = ["payload_multiple", "policy", "metric", "mean", "ci95"]
FIG67_HEADER = ["episode", "variant", "metric", "mean"]

METRICS = ("v2i_sum_rate_bps", "v2v_success_prob")


def _seed_for(master, *key):
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(int(k) for k in key))


def _metric_pair(report):
    return {
        "v2i_sum_rate_bps": report.mean_v2i_sum_rate_bps,
        "v2v_success_prob": report.success_probability,
    }


# -- payload sweep (grouped-bar comparison) ---------------------------------

def _payload_cell(args):
    (kind, task, source_task, seed, meta_actor, meta_critic, schedule, adapt_loops,
     training_episodes, eval_episodes, value_scale, search_budget) = args
    upsilon = calibrate_upsilon(task, _seed_for(seed, 0))
    if kind == "random":
        policy = ev.RandomPolicy()
    elif kind == "maxV2V":
        policy = ev.MaxV2VPolicy(search_budget)
    elif kind == "meta-init":
        res = ev.adapt(meta_actor, meta_critic, task, _seed_for(seed, 1),
                       adapt_loops, schedule, upsilon=upsilon)
        policy = ev.policy_for(res.actor)
    elif kind == "rand-init":
        rng = np.random.default_rng(_seed_for(seed, 2))
        actor = init_params(actor_architecture(task.obs_dim, task.n_actions), rng)
        critic = init_params(critic_architecture(task.obs_dim), rng, out_scale=value_scale)
        res = ev.adapt(actor, critic, task, _seed_for(seed, 3), adapt_loops,
                       schedule, upsilon=upsilon)
        policy = ev.policy_for(res.actor)
    elif kind == "matched":
        res = ev.train_policy(task, training_episodes, _seed_for(seed, 4),
                              schedule, value_scale, upsilon=upsilon)
        policy = ev.policy_for(res.actor)
    elif kind == "mismatched":
        # trained to budget in a maximally different task, then dropped
        # into the evaluation task as-is
        res = ev.train_policy(source_task, training_episodes, _seed_for(seed, 4),
                              schedule, value_scale)
        policy = ev.policy_for(res.actor)
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    report = ev.evaluate_policy(policy, task, eval_episodes, _seed_for(seed, 5),
                                upsilon=upsilon)
    return _metric_pair(report)


def payload_sweep(base_task, policies, payload_multiples, seeds, out_path,
                  meta_actor=None, meta_critic=None, mismatched_task=None,
                  schedule=None, adapt_loops=2, matched_episodes=1000,
                  eval_episodes=50, value_scale=1000.0,
                  search_budget=ev.DEFAULT_SEARCH_BUDGET, jobs=1):
    """Bar-chart data: one (policy, payload) aggregate per metric."""
    schedule = schedule or InnerSchedule()
    cells = []
    keys = []
    for mult in payload_multiples:
        task = replace(base_task, payload_bits=mult * PAYLOAD_UNIT_BITS)
        for kind in policies:
            for s_i, seed in enumerate(seeds):
                cells.append((kind, task, mismatched_task, seed, meta_actor,
                              meta_critic, schedule, adapt_loops, matched_episodes,
                              eval_episodes, value_scale, search_budget))
                keys.append((mult, kind, s_i))
    results = run_cells(_payload_cell, cells, jobs)
    rows = []
    for mult in payload_multiples:
        for kind in policies:
            picked = [r for k, r in zip(keys, results) if k[0] == mult and k[1] == kind]
            for metric in METRICS:
                vals = np.array([p[metric] for p in picked])
                ci = 1.96 * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
                rows.append({
                    "payload_multiple": mult,
                    "policy": kind,
                    "metric": metric,
                    "mean": float(vals.mean()),
                    "ci95": float(ci),
                })
    write_csv(out_path, FIG45_HEADER, rows)
    return rows


# -- gradient-step sweep ----------------------------------------------------

def _gradient_cell(args):
    meta_actor, meta_critic, task, seed, schedule, adapt_loops, eval_episodes = args
    upsilon = calibrate_upsilon(task, _seed_for(seed, 0))
    res = ev.adapt(meta_actor, meta_critic, task, _seed_for(seed, 1), adapt_loops,
                   schedule, upsilon=upsilon, snapshot_steps=True)
    rows = []
    for step, actor in res.snapshots:
        report = ev.evaluate_policy(ev.policy_for(actor), task, eval_episodes,
                                    _seed_for(seed, 2), upsilon=upsilon)
        pair = _metric_pair(report)
        for metric in METRICS:
            rows.append({"gradient_step": step, "metric": metric,
                         "value": pair[metric], "seed": seed})
    return rows


def gradient_step_sweep(meta_actor, meta_critic, task, seeds, out_path,
                        schedule=None, adapt_loops=2, eval_episodes=20, jobs=1):
    """Metric after every adaptation gradient step, per seed."""
    schedule = schedule or InnerSchedule()
    cells = [(meta_actor, meta_critic, task, seed, schedule, adapt_loops, eval_episodes)
             for seed in seeds]
    results = run_cells(_gradient_cell, cells, jobs)
    rows = [r for cell_rows in results for r in cell_rows]
    write_csv(out_path, FIG3_HEADER, rows)
    return rows


# -- adaptation-curve comparisons -------------------------------------------

def _curve_cell(args):
    (actor, critic, task, seed, schedule, n_loops, eval_every, eval_episodes) = args
    upsilon = calibrate_upsilon(task, _seed_for(seed, 0))
    res = ev.adapt(actor, critic, task, _seed_for(seed, 1), n_loops, schedule,
                   upsilon=upsilon, eval_every=eval_every, eval_episodes=eval_episodes)
    return res.loop_stats, res.eval_rows


def adaptation_curves(variants, task_for, seeds, out_path, schedule=None,
                      n_loops=20, eval_every=1, eval_episodes=10, jobs=1):
    """Adaptation curves averaged over seeds for several variants.

    variants: {name: (actor, critic)}; task_for: {name: TaskConfig}.
    Emits per-loop rows for both headline metrics plus the training
    episodes' mean cumulative reward. Returns (rows, raw) where raw maps
    (variant, seed index) -> (loop_stats, eval_rows).
    """
    schedule = schedule or InnerSchedule()
    names = list(variants)
    cells = []
    keys = []
    for name in names:
        actor, critic = variants[name]
        for s_i, seed in enumerate(seeds):
            cells.append((actor, critic, task_for[name], seed, schedule,
                          n_loops, eval_every, eval_episodes))
            keys.append((name, s_i))
    results = run_cells(_curve_cell, cells, jobs)
    raw = dict(zip(keys, results))
    rows = []
    for name in names:
        per_seed = [raw[(name, s_i)] for s_i in range(len(seeds))]
        for loop in range(n_loops):
            episode = (loop + 1) * schedule.n_traj
            train_means = [ps[0][loop]["mean_cumulative_reward"] for ps in per_seed]
            rows.append({"episode": episode, "variant": name,
                         "metric": "mean_cumulative_reward",
                         "mean": float(np.mean(train_means))})
            if eval_every and (loop + 1) % eval_every == 0:
                eval_idx = (loop + 1) // eval_every - 1
                for metric in METRICS:
                    vals = [ps[1][eval_idx][metric] for ps in per_seed]
                    rows.append({"episode": episode, "variant": name,
                                 "metric": metric, "mean": float(np.mean(vals))})
    write_csv(out_path, FIG67_HEADER, rows)
    return rows, raw


def write_meta_curve(history, out_path):
    """Meta-training convergence rows (outer_loop, eval score)."""
    rows = [{"outer_loop": loop, "eval_mean_cumulative_reward": score}
            for loop, score in history]
    write_csv(out_path, FIG2_HEADER, rows)
    return rows


def run_study(which, out_path, **kwargs):
    """Dispatch a named study; returns the CSV rows it wrote.

    which: fig3 (gradient-step sweep), fig45 (payload sweep), fig6 /
    fig7 (adaptation-curve comparisons, sharing the fig67 schema). An
    empty policy/variant collection yields an empty CSV with the header.
    """
    if which == "fig45":
        if not kwargs.get("policies"):
            write_csv(out_path, FIG45_HEADER, [])
            return []
        return payload_sweep(out_path=out_path, **kwargs)
    if which == "fig3":
        return gradient_step_sweep(out_path=out_path, **kwargs)
    if which in ("fig6", "fig7", "fig67"):
        if not kwargs.get("variants"):
            write_csv(out_path, FIG67_HEADER, [])
            return []
        rows, _ = adaptation_curves(out_path=out_path, **kwargs)
        return rows
    raise ValueError(f"unknown study {which!r}")
