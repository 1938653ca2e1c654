"""On-policy learner: trajectory collection, advantage estimation,
clipped-ratio policy updates and squared temporal-difference value fits.

One actor and one critic are shared by all agents; every agent acts on
its own observation and all transitions fill a common buffer. The shared
per-slot reward is credited to every agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neuralnet as nn

DEFAULT_CLIP_RATIO = 0.2
DEFAULT_DISCOUNT = 0.99
DEFAULT_GAE_LAMBDA = 0.95
ADV_NORM_EPS = 1e-8


@dataclass
class TrajectoryBatch:
    """Per-slot records of a set of same-length episodes.

    Shapes: observations (E, T, N, D), actions/log_probs/values
    (E, T, N), rewards/dones (E, T) where E = episodes, T = slots,
    N = agents. Values are the collection-time critic's estimates.
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    episode_stats: list = field(default_factory=list)

    @property
    def n_episodes(self):
        return self.observations.shape[0]

    @property
    def n_slots(self):
        return self.observations.shape[1]

    @property
    def n_agents(self):
        return self.observations.shape[2]

    @property
    def n_records(self):
        return self.n_episodes * self.n_slots * self.n_agents

    def flat_observations(self):
        return self.observations.reshape(-1, self.observations.shape[-1])


@dataclass
class AdvantageRecord:
    """Advantages and the TD residuals they were built from, (E, T, N)."""

    advantages: np.ndarray
    deltas: np.ndarray


class Buffer:
    """Experience buffer: holds collected batches until the next update."""

    def __init__(self):
        self._batches = []

    def add(self, batch):
        self._batches.append(batch)

    def merged(self):
        if not self._batches:
            raise ValueError("experience buffer is empty")
        if len(self._batches) == 1:
            return self._batches[0]
        b0 = self._batches[0]
        return TrajectoryBatch(
            observations=np.concatenate([b.observations for b in self._batches]),
            actions=np.concatenate([b.actions for b in self._batches]),
            log_probs=np.concatenate([b.log_probs for b in self._batches]),
            rewards=np.concatenate([b.rewards for b in self._batches]),
            values=np.concatenate([b.values for b in self._batches]),
            dones=np.concatenate([b.dones for b in self._batches]),
            episode_stats=[s for b in self._batches for s in b.episode_stats],
        )

    def clear(self):
        self._batches = []

    def __len__(self):
        return sum(b.n_records for b in self._batches)


def sample_actions(probs, rng):
    """One categorical draw per row of a probability matrix."""
    u = rng.random(probs.shape[0])
    cum = np.cumsum(probs, axis=1)
    idx = (u[:, None] > cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def collect(env, actor, critic, n_trajectories, rng):
    """Roll out full episodes under the stochastic policy.

    Returns a TrajectoryBatch of n_trajectories episodes; per-episode
    summary metrics land in episode_stats. Values are filled in one
    batched pass after collection (same critic throughout).
    """
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    task = env.task
    if task.terminate_on_delivery:
        raise ValueError("collection needs fixed-length episodes")
    t_slots, n_agents = task.slots_per_episode, env.n_agents
    obs_dim = task.obs_dim
    observations = np.empty((n_trajectories, t_slots, n_agents, obs_dim))
    actions = np.empty((n_trajectories, t_slots, n_agents), dtype=np.int64)
    log_probs = np.empty((n_trajectories, t_slots, n_agents))
    rewards = np.empty((n_trajectories, t_slots))
    dones = np.zeros((n_trajectories, t_slots), dtype=bool)
    stats = []
    for e in range(n_trajectories):
        obs = env.reset()
        total_reward = 0.0
        v2i_sum = 0.0
        result = None
        for t in range(t_slots):
            probs = nn.actor_probs(actor, obs)
            acts = sample_actions(probs, rng)
            observations[e, t] = obs
            actions[e, t] = acts
            log_probs[e, t] = np.log(probs[np.arange(n_agents), acts])
            result = env.step(acts)
            rewards[e, t] = result.reward
            total_reward += result.reward
            v2i_sum += result.v2i_rates.sum()
            obs = result.observations
        dones[e, -1] = True
        stats.append(
            {
                "episode": env.episode,
                "cumulative_reward": total_reward,
                "v2i_sum_rate_bps": v2i_sum / t_slots,
                "success_rate": float(result.success.mean()),
            }
        )
    values = nn.critic_values(critic, observations.reshape(-1, obs_dim))
    return TrajectoryBatch(
        observations, actions, log_probs, rewards,
        values.reshape(n_trajectories, t_slots, n_agents), dones, stats,
    )


def compute_gae(batch, discount=DEFAULT_DISCOUNT, gae_lambda=DEFAULT_GAE_LAMBDA):
    """Truncated discounted sums of TD residuals within each episode.

    The terminal slot bootstraps a zero value. Uses the values logged in
    the batch, not refreshed ones.
    """
    v = batch.values
    r = batch.rewards[:, :, None]
    not_done = (~batch.dones[:, :, None]).astype(np.float64)
    v_next = np.zeros_like(v)
    v_next[:, :-1] = v[:, 1:]
    deltas = r + discount * v_next * not_done - v
    advantages = np.zeros_like(deltas)
    advantages[:, -1] = deltas[:, -1]
    for t in range(batch.n_slots - 2, -1, -1):
        advantages[:, t] = deltas[:, t] + discount * gae_lambda * not_done[:, t] * advantages[:, t + 1]
    return AdvantageRecord(advantages, deltas)


def _clipped_objective(ratio, advantages, clip_ratio):
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    return np.minimum(ratio * advantages, clipped * advantages)


def actor_loss(actor, observations, actions, old_log_probs, advantages,
               clip_ratio=DEFAULT_CLIP_RATIO):
    """Mean clipped importance-weighted advantage (to be maximized)."""
    logp = nn.actor_log_probs(actor, observations)
    chosen = logp[np.arange(len(actions)), actions]
    ratio = np.exp(chosen - old_log_probs)
    return float(_clipped_objective(ratio, advantages, clip_ratio).mean())


def actor_loss_grad(actor, observations, actions, old_log_probs, advantages,
                    clip_ratio=DEFAULT_CLIP_RATIO, entropy_coef=0.0):
    """Loss value and its exact gradient wrt the actor parameters.

    The per-sample gradient flows only where the unclipped branch attains
    the min (ties included); elsewhere the objective is locally flat.
    """
    logits, cache = nn.forward(actor, observations)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp_all = shifted - log_z
    probs = np.exp(logp_all)
    m = len(actions)
    rows = np.arange(m)
    chosen = logp_all[rows, actions]
    ratio = np.exp(chosen - old_log_probs)
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    unclipped_term = ratio * advantages
    clipped_term = clipped * advantages
    loss = float(np.minimum(unclipped_term, clipped_term).mean())
    # d loss / d logp(a): ratio*adv where the unclipped branch is active
    coef = np.where(unclipped_term <= clipped_term, ratio * advantages, 0.0) / m
    d_logits = -probs * coef[:, None]
    d_logits[rows, actions] += coef
    if entropy_coef != 0.0:
        entropy = float(-(probs * logp_all).sum(axis=1).mean())
        loss += entropy_coef * entropy
        # d entropy / d logits = -probs * (logp + H) per row
        row_h = (probs * logp_all).sum(axis=1, keepdims=True)
        d_logits += entropy_coef * (-probs * (logp_all - row_h)) / m
    grads = nn.backward(actor, cache, d_logits)
    return loss, grads


def critic_loss(critic, batch, discount=DEFAULT_DISCOUNT):
    """Mean squared TD residual under the given critic."""
    loss, _ = _critic_loss_impl(critic, batch, discount, want_grads=False)
    return loss


def critic_loss_grad(critic, batch, discount=DEFAULT_DISCOUNT):
    """Loss and exact gradient; the residual is differentiated through
    both the current and the next state's value."""
    return _critic_loss_impl(critic, batch, discount, want_grads=True)


def _critic_loss_impl(critic, batch, discount, want_grads):
    obs_flat = batch.flat_observations()
    out, cache = nn.forward(critic, obs_flat)
    e, t, n = batch.rewards.shape[0], batch.n_slots, batch.n_agents
    v = out[:, 0].reshape(e, t, n)
    not_done = (~batch.dones[:, :, None]).astype(np.float64)
    v_next = np.zeros_like(v)
    v_next[:, :-1] = v[:, 1:]
    deltas = batch.rewards[:, :, None] + discount * v_next * not_done - v
    m = deltas.size
    loss = float((deltas * deltas).sum() / m)
    if not want_grads:
        return loss, None
    coef = -2.0 * deltas / m
    coef[:, 1:] += (2.0 * discount / m) * (deltas[:, :-1] * not_done[:, :-1])
    grads = nn.backward(critic, cache, coef.reshape(-1, 1))
    return loss, grads


def normalize_advantages(advantages):
    flat = advantages.ravel()
    return (advantages - flat.mean()) / (flat.std() + ADV_NORM_EPS)


@dataclass
class UpdateStats:
    actor_losses: list
    critic_losses: list


def ppo_update(actor, critic, buffer, n_steps, learning_rate,
               clip_ratio=DEFAULT_CLIP_RATIO, discount=DEFAULT_DISCOUNT,
               gae_lambda=DEFAULT_GAE_LAMBDA, adam_actor=None, adam_critic=None,
               normalize=True, entropy_coef=0.0, minibatch_size=None, rng=None):
    """N gradient steps from the buffered experience; empties the buffer.

    The actor ascends its objective, the critic descends its loss.
    Advantages are computed once per call from the logged values and
    (by default) normalized over the whole batch. The optional minibatch
    size subsamples actor steps only; the critic always fits the full
    batch because its residuals couple consecutive slots. Returns the
    updated (actor, critic, adam_actor, adam_critic, stats).
    """
    batch = buffer.merged() if isinstance(buffer, Buffer) else buffer
    if batch.n_records == 0:
        raise ValueError("experience buffer is empty")
    record = compute_gae(batch, discount, gae_lambda)
    adv = normalize_advantages(record.advantages) if normalize else record.advantages
    obs = batch.flat_observations()
    acts = batch.actions.ravel()
    old_logp = batch.log_probs.ravel()
    adv_flat = adv.ravel()
    if adam_actor is None:
        adam_actor = nn.AdamState.fresh(actor, learning_rate)
    if adam_critic is None:
        adam_critic = nn.AdamState.fresh(critic, learning_rate)
    if minibatch_size is not None and rng is None:
        raise ValueError("minibatch sampling needs an rng")
    stats = UpdateStats([], [])
    for _ in range(n_steps):
        if minibatch_size is None:
            sel = slice(None)
            a_loss, a_grads = actor_loss_grad(
                actor, obs, acts, old_logp, adv_flat, clip_ratio, entropy_coef
            )
        else:
            pick = rng.choice(len(acts), size=min(minibatch_size, len(acts)), replace=False)
            a_loss, a_grads = actor_loss_grad(
                actor, obs[pick], acts[pick], old_logp[pick], adv_flat[pick],
                clip_ratio, entropy_coef,
            )
        actor, adam_actor = nn.adam_step(actor, [-g for g in a_grads], adam_actor)
        c_loss, c_grads = critic_loss_grad(critic, batch, discount)
        critic, adam_critic = nn.adam_step(critic, c_grads, adam_critic)
        stats.actor_losses.append(a_loss)
        stats.critic_losses.append(c_loss)
    if isinstance(buffer, Buffer):
        buffer.clear()
    return actor, critic, adam_actor, adam_critic, stats
