"""Task distributions and the two-loop training schedule.

Tasks are generated as Cartesian grids over the five environment factors.
Each outer loop samples a handful of tasks, runs a short on-policy
adaptation per task starting from the shared initialization, and then
moves the shared initialization a fraction of the mean adaptation
displacement (the first-order meta update).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import neuralnet as nn
from . import ppo
from .environment import SpectrumEnv, TaskConfig, calibrate_upsilon
from .pool import run_cells

DEFAULT_INNER_LR = 3e-4
DEFAULT_OUTER_LR = 1e-4
DEFAULT_N_TASK = 20
DEFAULT_N_INNER = 2
DEFAULT_N_UPDATES = 10
DEFAULT_N_TRAJ = 10
DEFAULT_VALUE_SCALE = 1000.0

FACTOR_NAMES = ("links_per_vehicle", "speed_kmh", "payload_multiple",
                "ricean_k_v2i", "ricean_k_v2v")


@dataclass(frozen=True)
class FactorGrid:
    """Value lists for the five task factors."""

    links_per_vehicle: tuple = (1, 2, 3)
    speed_kmh: tuple = (10.0, 20.0, 30.0)
    payload_multiple: tuple = (2, 4, 6)
    ricean_k_v2i: tuple = (10.0, 15.0, 20.0)
    ricean_k_v2v: tuple = (0.0, 3.0, 6.0)

    def size(self):
        return (
            len(self.links_per_vehicle) * len(self.speed_kmh) * len(self.payload_multiple)
            * len(self.ricean_k_v2i) * len(self.ricean_k_v2v)
        )

    def axes(self):
        return (self.links_per_vehicle, self.speed_kmh, self.payload_multiple,
                self.ricean_k_v2i, self.ricean_k_v2v)

    def as_dict(self):
        return {name: list(axis) for name, axis in zip(FACTOR_NAMES, self.axes())}


# Grid presets. The three large ones are the full task-distribution
# designs; the desk pair powers the scaled-down studies.
NAMED_GRIDS = {
    "72": FactorGrid((1, 3), (10.0, 20.0, 30.0), (2, 4, 6), (10.0, 20.0), (0.0, 6.0)),
    "243": FactorGrid(),
    "432": FactorGrid((1, 2, 3), (10.0, 20.0, 30.0), (2, 4, 6),
                      (10.0, 13.3, 16.7, 20.0), (0.0, 2.0, 4.0, 6.0)),
    "desk32": FactorGrid((1, 2), (10.0, 30.0), (2, 4), (10.0, 20.0), (0.0, 6.0)),
    "desk8": FactorGrid((1, 2), (10.0, 30.0), (2, 4), (10.0,), (0.0,)),
}

# Held-out grids used for periodic evaluation during meta-training; the
# factor values sit between the training values so no member coincides
# with a training task.
EVAL_GRIDS = {
    "72": FactorGrid((2,), (15.0, 25.0), (3, 5), (12.5, 17.5), (1.5, 4.5)),
    "243": FactorGrid((2,), (15.0, 25.0), (3, 5), (12.5, 17.5), (1.5, 4.5)),
    "432": FactorGrid((2,), (15.0, 25.0), (3, 5), (12.5, 17.5), (1.5, 4.5)),
    "desk32": FactorGrid((1, 2), (20.0,), (3,), (15.0,), (1.5, 4.5)),
    "desk8": FactorGrid((1, 2), (20.0,), (3,), (15.0,), (1.5, 4.5)),
}

# Off-grid "harder" value per factor, used to construct testing tasks at
# a controlled distance from a training grid. Larger fleets, speed and
# payload and weaker LOS all worsen the communication conditions.
_HARDER_LINKS = (3, 2, 1)
_DOMAIN_LINKS = (1, 2, 3)


def off_grid_value(name, axis):
    """A value outside the grid axis that makes the task harder.

    For the link count the domain is exhausted by the full grids; in
    that case the hardest member is returned (documented fallback).
    """
    axis = tuple(axis)
    if name == "links_per_vehicle":
        for v in _HARDER_LINKS:
            if v not in axis:
                return v
        return max(axis)
    if name == "speed_kmh":
        return max(axis) + 20.0
    if name == "payload_multiple":
        return max(axis) + 2
    if name == "ricean_k_v2i":
        candidate = min(axis) / 2.0
        return candidate if candidate not in axis else candidate / 2.0
    if name == "ricean_k_v2v":
        return 1.0 if 0.0 in axis else 0.0
    raise ValueError(f"unknown factor {name}")


def distance_variant_task(grid, n_differ, reference=None, **task_overrides):
    """A testing task differing from the grid in the first n_differ factors.

    The 0-differ task is a grid member (the reference, default: first
    value of every axis); each differing factor takes an off-grid value
    that worsens the communication conditions.
    """
    if not 0 <= n_differ <= 5:
        raise ValueError("n_differ must be between 0 and 5")
    axes = dict(zip(FACTOR_NAMES, grid.axes()))
    values = dict(reference) if reference else {n: axes[n][0] for n in FACTOR_NAMES}
    for name in FACTOR_NAMES[:n_differ]:
        values[name] = off_grid_value(name, axes[name])
    return TaskConfig.from_factors(
        values["links_per_vehicle"], values["payload_multiple"], values["speed_kmh"],
        values["ricean_k_v2i"], values["ricean_k_v2v"], **task_overrides,
    )


@dataclass
class TaskSet:
    """Ordered tasks plus where they came from."""

    tasks: list
    provenance: str

    def __len__(self):
        return len(self.tasks)


def generate_task_set(grid, provenance=None, **task_overrides):
    """Full Cartesian product of the grid, in declared factor order."""
    if isinstance(grid, str):
        provenance = provenance or f"{grid}-grid"
        grid = NAMED_GRIDS[grid]
    for name, axis in zip(FACTOR_NAMES, grid.axes()):
        if len(axis) == 0:
            raise ValueError(f"factor {name} has no grid values")
    tasks = [
        TaskConfig.from_factors(links, payload, speed, k1, k2, **task_overrides)
        for links, speed, payload, k1, k2 in itertools.product(*grid.axes())
    ]
    return TaskSet(tasks, provenance or "custom-grid")


def sample_tasks(task_set, n_task, rng):
    """Uniform sample without replacement; returns (index, task) pairs
    sorted by task index so downstream reductions are order-stable."""
    if n_task > len(task_set):
        raise ValueError(f"cannot sample {n_task} tasks from a set of {len(task_set)}")
    idx = np.sort(rng.choice(len(task_set), size=n_task, replace=False))
    return [(int(i), task_set.tasks[int(i)]) for i in idx]


def fair_outer_loops(set_size, n_task, samples_per_task=16):
    """Outer-loop count keeping the expected visits per task roughly
    constant across set sizes."""
    return max(1, round(samples_per_task * set_size / n_task))


@dataclass
class InnerSchedule:
    """Constants of one per-task adaptation."""

    n_inner: int = DEFAULT_N_INNER
    n_traj: int = DEFAULT_N_TRAJ
    n_updates: int = DEFAULT_N_UPDATES
    learning_rate: float = DEFAULT_INNER_LR
    clip_ratio: float = ppo.DEFAULT_CLIP_RATIO
    discount: float = ppo.DEFAULT_DISCOUNT
    gae_lambda: float = ppo.DEFAULT_GAE_LAMBDA
    entropy_coef: float = 0.0
    minibatch_size: int = None
    normalize_advantages: bool = True


def inner_adapt(task, actor, critic, seed, schedule=None, upsilon=None):
    """Adapt copies of the shared parameters to one task.

    Runs n_inner cycles of (collect n_traj episodes -> n_updates gradient
    steps), with one Adam state per network across the whole adaptation.
    The input parameter sets are never mutated. Returns
    (actor_j, critic_j, episode_stats).
    """
    schedule = schedule or InnerSchedule()
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_seed, action_seed = seq.spawn(2)
    env = SpectrumEnv(task, env_seed, upsilon=upsilon)
    rng = np.random.default_rng(action_seed)
    actor_j, critic_j = actor.copy(), critic.copy()
    adam_a = nn.AdamState.fresh(actor_j, schedule.learning_rate)
    adam_c = nn.AdamState.fresh(critic_j, schedule.learning_rate)
    stats = []
    buffer = ppo.Buffer()
    for _ in range(schedule.n_inner):
        batch = ppo.collect(env, actor_j, critic_j, schedule.n_traj, rng)
        stats.extend(batch.episode_stats)
        buffer.add(batch)
        actor_j, critic_j, adam_a, adam_c, _ = ppo.ppo_update(
            actor_j, critic_j, buffer, schedule.n_updates, schedule.learning_rate,
            clip_ratio=schedule.clip_ratio, discount=schedule.discount,
            gae_lambda=schedule.gae_lambda, adam_actor=adam_a, adam_critic=adam_c,
            normalize=schedule.normalize_advantages, entropy_coef=schedule.entropy_coef,
            minibatch_size=schedule.minibatch_size,
            rng=rng if schedule.minibatch_size else None,
        )
    return actor_j, critic_j, stats


def reptile_update(params, adapted, inner_lr, outer_lr, n_task=None):
    """Move the shared parameters toward the adapted ones.

    params <- params + outer_lr/(n_task*inner_lr) * sum_j (params_j - params),
    summed in the given (task-id) order. If every adapted set equals the
    input, the input is returned unchanged.
    """
    adapted = list(adapted)
    if not adapted:
        raise ValueError("no adapted parameter sets")
    n = n_task if n_task is not None else len(adapted)
    coef = outer_lr / (n * inner_lr)
    total = adapted[0] - params
    for p_j in adapted[1:]:
        total = total + (p_j - params)
    return params + coef * total


@dataclass
class MetaState:
    """Shared initialization plus training progress.

    history holds (outer_loop, eval score) rows from the periodic
    held-out evaluation; training_rows holds one per-task summary per
    inner adaptation for the training-curve CSV.
    """

    actor: nn.ParameterSet
    critic: nn.ParameterSet
    outer_loops_done: int = 0
    inner_lr: float = DEFAULT_INNER_LR
    outer_lr: float = DEFAULT_OUTER_LR
    history: list = field(default_factory=list)
    training_rows: list = field(default_factory=list)


@dataclass
class EvalSpec:
    """Periodic held-out evaluation during meta-training."""

    task_set: TaskSet
    every: int = 10
    n_tasks: int = 10
    adapt_loops: int = 2
    eval_episodes: int = 50


def _inner_cell(args):
    task, actor, critic, seed, schedule, upsilon = args
    actor_j, critic_j, stats = inner_adapt(task, actor, critic, seed, schedule, upsilon)
    summary = {
        "mean_cumulative_reward": float(np.mean([s["cumulative_reward"] for s in stats])),
        "v2i_sum_rate": float(np.mean([s["v2i_sum_rate_bps"] for s in stats])),
        "v2v_success_prob": float(np.mean([s["success_rate"] for s in stats])),
    }
    return actor_j, critic_j, summary


def _eval_cell(args):
    # evaluated lazily to avoid a circular import at module load
    from .evaluation import adapt_and_evaluate

    task, actor, critic, seed, adapt_loops, schedule, eval_episodes, upsilon = args
    report = adapt_and_evaluate(
        actor, critic, task, seed, adapt_loops=adapt_loops, schedule=schedule,
        eval_episodes=eval_episodes, upsilon=upsilon,
    )
    return report.mean_cumulative_reward


def meta_train(task_set, seed, n_out, n_task=DEFAULT_N_TASK, schedule=None,
               inner_lr=DEFAULT_INNER_LR, outer_lr=DEFAULT_OUTER_LR,
               value_scale=DEFAULT_VALUE_SCALE, eval_spec=None, jobs=1,
               progress=None, init_actor=None, init_critic=None):
    """The full two-loop schedule; returns a MetaState.

    history rows are (outer_loop, eval_mean_cumulative_reward) appended
    whenever the held-out evaluation runs. n_out = 0 returns the random
    initialization untouched.
    """
    if n_task > len(task_set):
        raise ValueError(f"tasks_per_loop {n_task} exceeds task-set size {len(task_set)}")
    schedule = schedule or InnerSchedule(learning_rate=inner_lr)
    seq = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    init_seed, sample_seed, calib_seed, loop_seed = seq.spawn(4)
    rng_init = np.random.default_rng(init_seed)
    rng_sample = np.random.default_rng(sample_seed)
    sample_task = task_set.tasks[0]
    obs_dim, n_actions = sample_task.obs_dim, sample_task.n_actions
    actor = init_actor or nn.init_params(nn.actor_architecture(obs_dim, n_actions), rng_init)
    critic = init_critic or nn.init_params(
        nn.critic_architecture(obs_dim), rng_init, out_scale=value_scale
    )
    upsilons = _calibrate_set(task_set, calib_seed)
    eval_upsilons = (
        _calibrate_set(eval_spec.task_set, calib_seed) if eval_spec is not None else None
    )
    state = MetaState(actor, critic, 0, inner_lr, outer_lr)
    loop_seqs = loop_seed.spawn(max(n_out, 1))
    for i in range(n_out):
        picked = sample_tasks(task_set, n_task, rng_sample)
        cell_seeds = loop_seqs[i].spawn(n_task + 1)
        cells = [
            (task, state.actor, state.critic, cell_seeds[j], schedule, upsilons[idx])
            for j, (idx, task) in enumerate(picked)
        ]
        results = run_cells(_inner_cell, cells, jobs)
        state.actor = reptile_update(
            state.actor, [r[0] for r in results], inner_lr, outer_lr, n_task
        )
        state.critic = reptile_update(
            state.critic, [r[1] for r in results], inner_lr, outer_lr, n_task
        )
        state.outer_loops_done = i + 1
        for (idx, _), (_, _, summary) in zip(picked, results):
            state.training_rows.append({"outer_loop": i + 1, "task_id": idx, **summary})
        train_reward = float(np.mean([r[2]["mean_cumulative_reward"] for r in results]))
        score = None
        if eval_spec is not None and (i + 1) % eval_spec.every == 0:
            score = _run_eval(state, eval_spec, schedule, cell_seeds[-1], eval_upsilons, jobs)
            state.history.append((i + 1, score))
        if progress:
            progress(i + 1, score, train_reward)
    return state


class _UpsilonCache:
    """Per-task delivery-bonus calibration, computed on first use.

    Each task gets its own pre-spawned seed, so the calibrated value does
    not depend on the order tasks happen to be sampled in.
    """

    def __init__(self, task_set, calib_seed):
        self._tasks = task_set.tasks
        self._seqs = calib_seed.spawn(len(task_set.tasks))
        self._cache = {}

    def __getitem__(self, idx):
        if idx not in self._cache:
            self._cache[idx] = calibrate_upsilon(self._tasks[idx], self._seqs[idx])
        return self._cache[idx]


def _calibrate_set(task_set, calib_seed):
    return _UpsilonCache(task_set, calib_seed)


def _run_eval(state, eval_spec, schedule, seed, upsilons, jobs):
    rng = np.random.default_rng(seed)
    picked = sample_tasks(eval_spec.task_set, min(eval_spec.n_tasks, len(eval_spec.task_set)), rng)
    eval_seeds = seed.spawn(len(picked))
    cells = [
        (task, state.actor, state.critic, eval_seeds[j], eval_spec.adapt_loops,
         schedule, eval_spec.eval_episodes, upsilons[idx])
        for j, (idx, task) in enumerate(picked)
    ]
    scores = run_cells(_eval_cell, cells, jobs)
    return float(np.mean(scores))


def save_meta_checkpoint(path, state, task_set, schedule, n_task):
    """Meta checkpoint: both networks plus task-set provenance and the
    schedule constants, in one JSON container."""
    doc = {
        "format": "meta-checkpoint",
        "version": 1,
        "actor": nn.checkpoint_dict(state.actor, "actor"),
        "critic": nn.checkpoint_dict(state.critic, "critic"),
        "task_set": {"provenance": task_set.provenance, "size": len(task_set)},
        "schedule": {
            "outer_loops": state.outer_loops_done,
            "tasks_per_loop": n_task,
            "inner_loops": schedule.n_inner,
            "trajectories_per_loop": schedule.n_traj,
            "gradient_steps": schedule.n_updates,
            "inner_lr": state.inner_lr,
            "outer_lr": state.outer_lr,
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


def load_meta_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "meta-checkpoint":
        raise ValueError("not a meta checkpoint")
    actor = nn.params_from_checkpoint(doc["actor"])
    critic = nn.params_from_checkpoint(doc["critic"])
    return actor, critic, doc
