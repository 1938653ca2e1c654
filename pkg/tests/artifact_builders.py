"""Builders for the heavy acceptance artifacts.

Every builder is a deterministic function of the fixed seeds below; the
result is cached under acceptance_artifacts/ and reloaded on later runs.
Run `python tests/artifact_builders.py all [jobs]` to build everything
ahead of a pytest session.
"""

import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from v2xshare import evaluation as ev
from v2xshare import meta
from v2xshare import neuralnet as nn
from v2xshare import ppo
from v2xshare.environment import SpectrumEnv, TaskConfig, calibrate_upsilon
from v2xshare.pool import run_cells

ARTIFACTS_DIR = Path(__file__).resolve().parent.parent / "acceptance_artifacts"
MASTER_ENTROPY = 20260810

# criterion tasks
TASK_C7 = TaskConfig()
TASK_C8 = TaskConfig.from_factors(2, 3, 20.0, 15.0, 3.0)
TASK_C9 = TaskConfig.from_factors(2, 3, 20.0, 20.0, 6.0)
TASK_C10_NEAR = meta.distance_variant_task(meta.NAMED_GRIDS["desk32"], 0)
TASK_C10_FAR = meta.distance_variant_task(meta.NAMED_GRIDS["desk32"], 5)

META32_OUTER_LOOPS = 60
META32_TASKS_PER_LOOP = 8
META8_OUTER_LOOPS = 15  # equal expected visits per task as the 32-task run
MATCHED_EPISODES = 1000
C7_SEEDS = 5
C7_EPISODES = 300
C89_10_SEEDS = 10
CURVE_SEEDS = 20
CURVE_LOOPS = 20          # 100 episodes, updates every 5
CURVE_EPISODES_PER_LOOP = 5
CURVE_EVAL_EPISODES = 10


def seed_seq(*key):
    return np.random.SeedSequence(entropy=MASTER_ENTROPY, spawn_key=tuple(int(k) for k in key))


def default_jobs():
    return min(2, os.cpu_count() or 1)


def log(msg):
    print(f"[artifacts {time.strftime('%H:%M:%S')}] {msg}", flush=True)


# -- meta checkpoints ---------------------------------------------------------

def _train_meta(grid_name, n_out, n_task, seed_key, jobs):
    task_set = meta.generate_task_set(grid_name)
    eval_set = meta.generate_task_set(meta.EVAL_GRIDS[grid_name], provenance="held-out")
    eval_spec = meta.EvalSpec(task_set=eval_set, every=10, n_tasks=4,
                              adapt_loops=2, eval_episodes=10)
    t0 = time.time()
    state = meta.meta_train(
        task_set, seed_seq(*seed_key), n_out, n_task,
        schedule=meta.InnerSchedule(), eval_spec=eval_spec, jobs=jobs,
        progress=lambda i, s, tr: log(
            f"{grid_name}: loop {i}/{n_out} train {tr:.0f}"
            + (f" eval {s:.0f}" if s is not None else "")
            + f" [{time.time() - t0:.0f}s]"
        ),
    )
    return state, task_set


def build_meta32(art_dir, jobs=None):
    art_dir = Path(art_dir)
    ckpt = art_dir / "meta32_checkpoint.json"
    curve = art_dir / "meta32_fig2_rows.json"
    if ckpt.exists() and curve.exists():
        actor, critic, _ = meta.load_meta_checkpoint(ckpt)
        history = json.loads(curve.read_text())
        return actor, critic, history
    log("training 32-task meta initialization (this is the long one)")
    state, task_set = _train_meta("desk32", META32_OUTER_LOOPS, META32_TASKS_PER_LOOP,
                                  (32, 0), jobs or default_jobs())
    meta.save_meta_checkpoint(ckpt, state, task_set, meta.InnerSchedule(),
                              META32_TASKS_PER_LOOP)
    curve.write_text(json.dumps(state.history))
    return state.actor, state.critic, state.history


def build_meta8(art_dir, jobs=None):
    art_dir = Path(art_dir)
    ckpt = art_dir / "meta8_checkpoint.json"
    if ckpt.exists():
        actor, critic, _ = meta.load_meta_checkpoint(ckpt)
        return actor, critic
    log("training 8-task meta initialization")
    state, task_set = _train_meta("desk8", META8_OUTER_LOOPS, 8, (8, 0),
                                  jobs or default_jobs())
    meta.save_meta_checkpoint(ckpt, state, task_set, meta.InnerSchedule(), 8)
    return state.actor, state.critic


# -- trained baseline ----------------------------------------------------------

def _matched_cell(args):
    task, episodes, seed = args
    upsilon = calibrate_upsilon(task, seed.spawn(1)[0])
    res = ev.train_policy(task, episodes, seed, meta.InnerSchedule(), upsilon=upsilon)
    return res.actor, res.critic, upsilon


def build_matched_c8(art_dir, jobs=None):
    art_dir = Path(art_dir)
    ckpt = art_dir / "matched_c8_checkpoint.json"
    if ckpt.exists():
        actor, critic, doc = meta.load_meta_checkpoint(ckpt)
        return actor, critic
    log(f"training matched baseline ({MATCHED_EPISODES} episodes)")
    actor, critic, _ = _matched_cell((TASK_C8, MATCHED_EPISODES, seed_seq(88, 0)))
    state = meta.MetaState(actor, critic)
    meta.save_meta_checkpoint(ckpt, state, meta.TaskSet([TASK_C8], "matched"),
                              meta.InnerSchedule(), 1)
    return actor, critic


# -- criterion 7: training runs --------------------------------------------------

def _c7_cell(args):
    (seed_idx,) = args
    task = TASK_C7
    ups = calibrate_upsilon(task, seed_seq(7, seed_idx, 0))
    rng_init = np.random.default_rng(seed_seq(7, seed_idx, 1))
    actor = nn.init_params(nn.actor_architecture(task.obs_dim, task.n_actions), rng_init)
    critic = nn.init_params(nn.critic_architecture(task.obs_dim), rng_init,
                            out_scale=meta.DEFAULT_VALUE_SCALE)
    env = SpectrumEnv(task, seed_seq(7, seed_idx, 2), upsilon=ups)
    rng = np.random.default_rng(seed_seq(7, seed_idx, 3))
    adam_a = nn.AdamState.fresh(actor, 3e-4)
    adam_c = nn.AdamState.fresh(critic, 3e-4)
    rewards = []
    for _ in range(C7_EPISODES // 10):
        batch = ppo.collect(env, actor, critic, 10, rng)
        rewards.extend(s["cumulative_reward"] for s in batch.episode_stats)
        buf = ppo.Buffer()
        buf.add(batch)
        actor, critic, adam_a, adam_c, _ = ppo.ppo_update(
            actor, critic, buf, 10, 3e-4, adam_actor=adam_a, adam_critic=adam_c
        )
    # random policy over the identical scenario stream (same env seed)
    env_r = SpectrumEnv(task, seed_seq(7, seed_idx, 2), upsilon=ups)
    rng_r = np.random.default_rng(seed_seq(7, seed_idx, 3))
    random_rewards = []
    for _ in range(C7_EPISODES):
        env_r.reset()
        total = 0.0
        while not env_r.done:
            total += env_r.step(rng_r.integers(0, task.n_actions, env_r.n_agents)).reward
        random_rewards.append(total)
    return rewards, random_rewards


def build_c7(art_dir, jobs=None):
    art_dir = Path(art_dir)
    path = art_dir / "c7_training_runs.json"
    if path.exists():
        return json.loads(path.read_text())
    log(f"criterion 7: {C7_SEEDS} training runs of {C7_EPISODES} episodes")
    results = run_cells(_c7_cell, [(i,) for i in range(C7_SEEDS)], jobs or default_jobs())
    doc = {
        "ppo_rewards": [r[0] for r in results],
        "random_rewards": [r[1] for r in results],
    }
    path.write_text(json.dumps(doc))
    return doc


# -- criterion 8: adaptation comparison cells --------------------------------------

def _c8_cell(args):
    kind, seed_idx, actor, critic = args
    task = TASK_C8
    ups = calibrate_upsilon(task, seed_seq(80, seed_idx))
    schedule = meta.InnerSchedule()
    if kind == "rand-init":
        rng = np.random.default_rng(seed_seq(81, seed_idx))
        actor = nn.init_params(nn.actor_architecture(task.obs_dim, task.n_actions), rng)
        critic = nn.init_params(nn.critic_architecture(task.obs_dim), rng,
                                out_scale=meta.DEFAULT_VALUE_SCALE)
    if kind == "random":
        policy = ev.RandomPolicy()
    else:
        res = ev.adapt(actor, critic, task, seed_seq(82, seed_idx), 2, schedule,
                       upsilon=ups)
        policy = ev.policy_for(res.actor)
    report = ev.evaluate_policy(policy, task, 50, seed_seq(83, seed_idx), upsilon=ups)
    return {
        "v2i": report.mean_v2i_sum_rate_bps,
        "success": report.success_probability,
        "reward": report.mean_cumulative_reward,
    }


def build_c8_cells(art_dir, jobs=None):
    art_dir = Path(art_dir)
    path = art_dir / "c8_cells.json"
    if path.exists():
        return json.loads(path.read_text())
    actor, critic, _ = build_meta32(art_dir, jobs)
    m_actor, m_critic = build_matched_c8(art_dir, jobs)
    log("criterion 8: adaptation comparison cells")
    cells = []
    for kind in ("meta-init", "rand-init", "random"):
        for s in range(C89_10_SEEDS):
            cells.append((kind, s, actor, critic))
    results = run_cells(_c8_cell, cells, jobs or default_jobs())
    doc = {}
    i = 0
    for kind in ("meta-init", "rand-init", "random"):
        doc[kind] = results[i:i + C89_10_SEEDS]
        i += C89_10_SEEDS
    # the trained-in-place baseline is a single policy; evaluate it over
    # the same seeds
    matched_cells = [("matched-eval", s, m_actor, m_critic) for s in range(C89_10_SEEDS)]
    doc["matched"] = run_cells(_matched_eval_cell, matched_cells,
                               jobs or default_jobs())
    path.write_text(json.dumps(doc))
    return doc


def _matched_eval_cell(args):
    _, seed_idx, actor, critic = args
    task = TASK_C8
    ups = calibrate_upsilon(task, seed_seq(80, seed_idx))
    report = ev.evaluate_policy(ev.policy_for(actor), task, 50,
                                seed_seq(83, seed_idx), upsilon=ups)
    return {
        "v2i": report.mean_v2i_sum_rate_bps,
        "success": report.success_probability,
        "reward": report.mean_cumulative_reward,
    }


# -- criteria 9/10: adaptation curves -----------------------------------------------

def _curve_cell(args):
    variant, seed_idx, actor, critic, task, want_eval = args
    ups = calibrate_upsilon(task, seed_seq(90, seed_idx))
    schedule = dataclasses.replace(meta.InnerSchedule(), n_traj=CURVE_EPISODES_PER_LOOP)
    res = ev.adapt(
        actor, critic, task, seed_seq(91, seed_idx), CURVE_LOOPS, schedule,
        upsilon=ups, eval_every=1 if want_eval else None,
        eval_episodes=CURVE_EVAL_EPISODES,
    )
    return {
        "train_rewards": [r for stats in res.loop_stats for r in stats["episodes"]],
        "eval_rewards": [r["mean_cumulative_reward"] for r in res.eval_rows],
        "eval_v2i": [r["v2i_sum_rate_bps"] for r in res.eval_rows],
        "eval_success": [r["v2v_success_prob"] for r in res.eval_rows],
    }


def build_c9_cells(art_dir, jobs=None):
    art_dir = Path(art_dir)
    path = art_dir / "c9_cells.json"
    if path.exists():
        return json.loads(path.read_text())
    a32, c32, _ = build_meta32(art_dir, jobs)
    a8, c8_ = build_meta8(art_dir, jobs)
    log("criterion 9: task-count adaptation cells")
    cells = []
    for s in range(CURVE_SEEDS):
        cells.append(("grid32", s, a32, c32, TASK_C9, False))
        cells.append(("grid8", s, a8, c8_, TASK_C9, False))
    results = run_cells(_curve_cell, cells, jobs or default_jobs())
    doc = {"grid32": results[0::2], "grid8": results[1::2]}
    path.write_text(json.dumps(doc))
    return doc


def build_c10_cells(art_dir, jobs=None):
    art_dir = Path(art_dir)
    path = art_dir / "c10_cells.json"
    if path.exists():
        return json.loads(path.read_text())
    a32, c32, _ = build_meta32(art_dir, jobs)
    log("criterion 10: task-distance adaptation cells")
    cells = []
    for s in range(CURVE_SEEDS):
        cells.append(("near", s, a32, c32, TASK_C10_NEAR, True))
        cells.append(("far", s, a32, c32, TASK_C10_FAR, True))
    results = run_cells(_curve_cell, cells, jobs or default_jobs())
    doc = {"near": results[0::2], "far": results[1::2]}
    path.write_text(json.dumps(doc))
    return doc


def build_all(art_dir=ARTIFACTS_DIR, jobs=None):
    art_dir = Path(art_dir)
    art_dir.mkdir(exist_ok=True)
    build_meta32(art_dir, jobs)
    build_meta8(art_dir, jobs)
    build_matched_c8(art_dir, jobs)
    build_c7(art_dir, jobs)
    build_c8_cells(art_dir, jobs)
    build_c9_cells(art_dir, jobs)
    build_c10_cells(art_dir, jobs)
    log("all artifacts ready")


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    n_jobs = int(sys.argv[2]) if len(sys.argv) > 2 else default_jobs()
    ARTIFACTS_DIR.mkdir(exist_ok=True)
    if which == "all":
        build_all(ARTIFACTS_DIR, n_jobs)
    else:
        {
            "meta32": build_meta32,
            "meta8": build_meta8,
            "matched": build_matched_c8,
            "c7": build_c7,
            "c8": build_c8_cells,
            "c9": build_c9_cells,
            "c10": build_c10_cells,
        }[which](ARTIFACTS_DIR, n_jobs)
