"""Adaptation driver, baseline policies, metrics and study runners.

Policies are callables (observations, env, rng) -> joint action vector.
Learned policies evaluate by sampling from the policy with the
evaluation seed (default) or by argmax; either way a report is a pure
function of (checkpoint, task, seed).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import neuralnet as nn
from . import ppo
from .environment import (
    N_POWER_LEVELS,
    POWER_LEVELS_DBM,
    SpectrumEnv,
    TaskConfig,
    calibrate_upsilon,
    power_mw_from_index,
)
from .meta import InnerSchedule

DEFAULT_SEARCH_BUDGET = 2 ** 20

POLICY_KINDS = ("meta-init", "rand-init", "matched", "mismatched", "random", "maxV2V")


class SearchBudgetError(RuntimeError):
    """Joint-action space too large for the exhaustive baseline."""


@dataclass(frozen=True)
class PolicySpec:
    """How to materialize one evaluated policy."""

    kind: str
    checkpoint: str = None
    training_episodes: int = 0
    adapt_loops: int = 0
    trajectories_per_loop: int = 10
    gradient_steps: int = 10
    source_task: TaskConfig = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")


@dataclass
class EvalReport:
    """Per-episode rows plus their aggregates."""

    rows: list
    n_episodes: int
    mean_cumulative_reward: float
    mean_v2i_sum_rate_bps: float
    success_probability: float
    ci95_v2i: float
    ci95_success: float

    @classmethod
    def from_rows(cls, rows):
        v2i = np.array([r["v2i_sum_rate_bps"] for r in rows])
        succ = np.array([r["success_rate"] for r in rows])
        rew = np.array([r["cumulative_reward"] for r in rows])
        n = len(rows)
        return cls(
            rows=rows,
            n_episodes=n,
            mean_cumulative_reward=float(rew.mean()),
            mean_v2i_sum_rate_bps=float(v2i.mean()),
            success_probability=float(succ.mean()),
            ci95_v2i=float(1.96 * v2i.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
            ci95_success=float(1.96 * succ.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        )


class GreedyPolicy:
    """Most-probable action per agent under a trained actor.

    Deterministic, but brittle for lightly trained stochastic policies:
    an agent whose argmax is the silence level never delivers, while the
    sampled policy it approximates would. Kept as an option; reports
    default to SampledPolicy.
    """

    def __init__(self, actor):
        self.actor = actor

    def __call__(self, obs, env, rng):
        logits, _ = nn.forward(self.actor, obs)
        return logits.argmax(axis=1)


class SampledPolicy:
    """Actions drawn from the policy distribution.

    Evaluation stays reproducible because the draw uses the evaluation
    seed: identical (checkpoint, task, seed) still gives identical
    metrics.
    """

    def __init__(self, actor):
        self.actor = actor

    def __call__(self, obs, env, rng):
        return ppo.sample_actions(nn.actor_probs(self.actor, obs), rng)


EVAL_MODES = ("sample", "greedy")


def policy_for(actor, mode="sample"):
    if mode == "greedy":
        return GreedyPolicy(actor)
    if mode == "sample":
        return SampledPolicy(actor)
    raise ValueError(f"unknown eval mode {mode!r}")


class RandomPolicy:
    """Uniform over the joint (sub-band, power) table."""

    def __call__(self, obs, env, rng):
        return rng.integers(0, env.task.n_actions, env.n_agents)


class MaxV2VPolicy:
    """Per-slot exhaustive search maximizing the direct-link sum rate.

    Needs the environment's global CSI; a performance upper bound for
    the direct links, not a deployable policy.
    """

    def __init__(self, budget=DEFAULT_SEARCH_BUDGET):
        self.budget = budget

    def __call__(self, obs, env, rng):
        return centralized_max_v2v(env, budget=self.budget)[0]


def random_policy_actions(rng, n_agents, n_actions):
    return rng.integers(0, n_actions, n_agents)


def centralized_max_v2v(env, budget=DEFAULT_SEARCH_BUDGET):
    """Best joint action for the current slot under true global CSI.

    Enumerates all (n_actions)^N joint actions and maximizes the summed
    direct-link rate; exact ties resolve to the lowest joint index.
    Returns (actions, best_sum_rate_bps). Refuses when the joint space
    exceeds the budget.
    """
    task = env.task
    gains = env.current_gains()
    return max_v2v_search(
        gains, task.v2i_power_mw, task.noise_mw, task.band_width_hz, task.n_bands, budget
    )


def max_v2v_search(gains, v2i_power_mw, noise_mw, band_width_hz, n_bands, budget):
    n_links = gains["direct"].shape[0]
    n_actions = n_bands * N_POWER_LEVELS
    n_joint = n_actions ** n_links
    if n_joint > budget:
        raise SearchBudgetError(
            f"{n_joint} joint actions exceed the search budget {budget}"
        )
    combos = np.array(list(itertools.product(range(n_actions), repeat=n_links)), dtype=np.int64)
    bands = combos // N_POWER_LEVELS                      # (K, N)
    powers = power_mw_from_index(combos % N_POWER_LEVELS)  # (K, N)
    links = np.arange(n_links)
    signal = powers * gains["direct"][links[None, :], bands]
    v2i_term = v2i_power_mw * gains["v2i_rx"][links[None, :], bands]
    # peer[k, c, n] = gain from tx k to rx n on rx n's band in combo c
    peer = gains["peer"][:, links[None, :], bands]
    same_band = bands[:, :, None] == bands[:, None, :]     # (K, k, n)
    same_band &= ~np.eye(n_links, dtype=bool)[None, :, :]
    contrib = powers[:, :, None] * peer.transpose(1, 0, 2)
    interference = v2i_term + (contrib * same_band).sum(axis=1)
    sinr = signal / (noise_mw + interference)
    totals = band_width_hz * np.log2(1.0 + sinr).sum(axis=1)
    best = int(np.argmax(totals))
    return combos[best], float(totals[best])


def evaluate_policy(policy, task, n_episodes, seed, upsilon=None, collect_log=False):
    """Greedy/deterministic rollout metrics over n_episodes.

    Returns an EvalReport; with collect_log=True each report row also
    carries the per-slot log (slot, agent, band, power_dBm, rates...).
    """
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_seed, policy_seed = seq.spawn(2)
    env = SpectrumEnv(task, env_seed, upsilon=upsilon)
    rng = np.random.default_rng(policy_seed)
    rows = []
    for e in range(n_episodes):
        obs = env.reset()
        total = 0.0
        v2i_sum = 0.0
        log_rows = []
        result = None
        for t in range(task.slots_per_episode):
            actions = np.asarray(policy(obs, env, rng))
            result = env.step(actions)
            total += result.reward
            v2i_sum += result.v2i_rates.sum()
            if collect_log:
                for agent in range(env.n_agents):
                    band, p_idx = divmod(int(actions[agent]), N_POWER_LEVELS)
                    row = {
                        "episode": e,
                        "slot": t,
                        "agent": agent,
                        "band": band,
                        "power_dBm": POWER_LEVELS_DBM[p_idx],
                        "v2v_rate_bps": float(result.v2v_rates[agent]),
                        "remaining_bits": float(result.remaining_bits[agent]),
                        "reward": result.reward,
                    }
                    for b in range(task.n_bands):
                        row[f"v2i_rate_bps_{b}"] = float(result.v2i_rates[b])
                    log_rows.append(row)
            obs = result.observations
        rows.append(
            {
                "episode": e,
                "cumulative_reward": total,
                "v2i_sum_rate_bps": v2i_sum / task.slots_per_episode,
                "success_rate": float(result.success.mean()),
                "successes": result.success.astype(int).tolist(),
                "log": log_rows if collect_log else None,
            }
        )
    return EvalReport.from_rows(rows)


@dataclass
class AdaptResult:
    """Adapted parameters plus everything observed on the way."""

    actor: nn.ParameterSet
    critic: nn.ParameterSet
    loop_stats: list = field(default_factory=list)
    eval_rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)


def adapt(actor, critic, task, seed, n_loops, schedule=None, upsilon=None,
          snapshot_steps=False, eval_every=None, eval_episodes=10,
          eval_mode="sample"):
    """Fine-tune a parameter pair in a fresh environment.

    Runs n_loops cycles of (collect trajectories_per_loop episodes ->
    gradient_steps updates); identical machinery to the per-task loop of
    meta-training. n_loops = 0 returns the inputs unchanged (zero-shot).
    snapshot_steps stores a parameter copy after every gradient step;
    eval_every inserts a greedy evaluation after every that-many loops.
    """
    schedule = schedule or InnerSchedule()
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_seed, action_seed, eval_seed = seq.spawn(3)
    if actor.in_dim != task.obs_dim or actor.out_dim != task.n_actions:
        raise ValueError(
            f"checkpoint architecture {actor.layer_sizes} does not match the task "
            f"({task.obs_dim} observations, {task.n_actions} actions)"
        )
    result = AdaptResult(actor.copy(), critic.copy())
    env = SpectrumEnv(task, env_seed, upsilon=upsilon)
    upsilon = env.upsilon
    rng = np.random.default_rng(action_seed)
    eval_seeds = eval_seed.spawn(n_loops) if (eval_every and n_loops) else []
    adam_a = nn.AdamState.fresh(result.actor, schedule.learning_rate)
    adam_c = nn.AdamState.fresh(result.critic, schedule.learning_rate)
    if snapshot_steps:
        result.snapshots.append((0, result.actor.copy()))
    step_counter = 0
    for loop in range(n_loops):
        batch = ppo.collect(env, result.actor, result.critic, schedule.n_traj, rng)
        result.loop_stats.append(
            {
                "loop": loop + 1,
                "episodes": [s["cumulative_reward"] for s in batch.episode_stats],
                "mean_cumulative_reward": float(
                    np.mean([s["cumulative_reward"] for s in batch.episode_stats])
                ),
                "mean_v2i_sum_rate_bps": float(
                    np.mean([s["v2i_sum_rate_bps"] for s in batch.episode_stats])
                ),
                "mean_success_rate": float(
                    np.mean([s["success_rate"] for s in batch.episode_stats])
                ),
            }
        )
        if snapshot_steps:
            buffer = ppo.Buffer()
            buffer.add(batch)
            for _ in range(schedule.n_updates):
                result.actor, result.critic, adam_a, adam_c, _ = ppo.ppo_update(
                    result.actor, result.critic, buffer.merged(), 1,
                    schedule.learning_rate, clip_ratio=schedule.clip_ratio,
                    discount=schedule.discount, gae_lambda=schedule.gae_lambda,
                    adam_actor=adam_a, adam_critic=adam_c,
                    normalize=schedule.normalize_advantages,
                    entropy_coef=schedule.entropy_coef,
                )
                step_counter += 1
                result.snapshots.append((step_counter, result.actor.copy()))
        else:
            buffer = ppo.Buffer()
            buffer.add(batch)
            result.actor, result.critic, adam_a, adam_c, _ = ppo.ppo_update(
                result.actor, result.critic, buffer, schedule.n_updates,
                schedule.learning_rate, clip_ratio=schedule.clip_ratio,
                discount=schedule.discount, gae_lambda=schedule.gae_lambda,
                adam_actor=adam_a, adam_critic=adam_c,
                normalize=schedule.normalize_advantages,
                entropy_coef=schedule.entropy_coef,
            )
        if eval_every and (loop + 1) % eval_every == 0:
            report = evaluate_policy(
                policy_for(result.actor, eval_mode), task, eval_episodes,
                eval_seeds[loop], upsilon=upsilon,
            )
            result.eval_rows.append(
                {
                    "loop": loop + 1,
                    "episode": (loop + 1) * schedule.n_traj,
                    "mean_cumulative_reward": report.mean_cumulative_reward,
                    "v2i_sum_rate_bps": report.mean_v2i_sum_rate_bps,
                    "v2v_success_prob": report.success_probability,
                }
            )
    return result


def adapt_and_evaluate(actor, critic, task, seed, adapt_loops, schedule=None,
                       eval_episodes=50, upsilon=None, eval_mode="sample"):
    """Meta-testing protocol: initialize, adapt briefly, evaluate greedily."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    adapt_seed, eval_seed = seq.spawn(2)
    if upsilon is None:
        upsilon = calibrate_upsilon(task, adapt_seed.spawn(1)[0])
    result = adapt(actor, critic, task, adapt_seed, adapt_loops, schedule, upsilon=upsilon)
    return evaluate_policy(
        policy_for(result.actor, eval_mode), task, eval_episodes, eval_seed,
        upsilon=upsilon,
    )


def train_policy(task, n_episodes, seed, schedule=None, value_scale=1000.0, upsilon=None):
    """Plain on-policy training from a random initialization.

    Used for the trained-in-place and trained-elsewhere baselines; the
    episode budget is consumed in loops of trajectories_per_loop.
    """
    schedule = schedule or InnerSchedule()
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seed, adapt_seed = seq.spawn(2)
    rng = np.random.default_rng(init_seed)
    actor = nn.init_params(nn.actor_architecture(task.obs_dim, task.n_actions), rng)
    critic = nn.init_params(nn.critic_architecture(task.obs_dim), rng, out_scale=value_scale)
    n_loops = max(1, n_episodes // schedule.n_traj)
    result = adapt(actor, critic, task, adapt_seed, n_loops, schedule, upsilon=upsilon)
    return result


# the study runners (payload sweeps, adaptation curves, ...) live in
# studies.py; run_study is re-exported there to keep this module small

