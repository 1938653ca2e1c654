"""The spectrum-sharing decision process.

A fleet of A vehicles shares A orthogonal sub-bands. Vehicle a holds the
uplink on sub-band a at fixed power; every vehicle additionally runs one
or more direct links to nearby vehicles, each delivering a fixed payload
within a 100-slot deadline. Each direct link is an agent choosing
(sub-band, power level) once per slot from its local view.

Conventions:
  * powers in mW, gains linear (link budgets already folded in),
  * rates in bit/s, per-band bandwidth = total bandwidth / A,
  * the shared reward weighs uplink and direct-link spectral
    efficiencies; a finished link contributes a calibrated bonus
    instead of its (zero) rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel

PAYLOAD_UNIT_BITS = 1060 * 8
POWER_LEVELS_DBM = (23.0, 15.0, 5.0, -100.0)
N_POWER_LEVELS = len(POWER_LEVELS_DBM)

# Observation normalization: gains and interference enter in dB/dBm,
# shifted and scaled to roughly [-1, 1].
GAIN_SHIFT_DB = 80.0
GAIN_SCALE_DB = 60.0
INTERFERENCE_SHIFT_DBM = 60.0
INTERFERENCE_SCALE_DBM = 60.0

UPSILON_MARGIN = 1.1
CALIBRATION_EPISODES = 10


@dataclass(frozen=True)
class TaskConfig:
    """One point of the task distribution plus the fixed physics.

    The five variable factors are links_per_vehicle, payload_bits,
    speed_kmh and the two Ricean K-factors; everything else is shared by
    all tasks.
    """

    links_per_vehicle: int = 1
    payload_bits: int = 2 * PAYLOAD_UNIT_BITS
    speed_kmh: float = 10.0
    ricean_k_v2i: float = 10.0
    ricean_k_v2v: float = 0.0
    n_vehicles: int = 4
    total_bandwidth_hz: float = 4e6
    v2i_power_dbm: float = 23.0
    noise_dbm: float = -114.0
    slots_per_episode: int = 100
    slot_seconds: float = 1e-3
    slow_update_seconds: float = 0.1
    v2i_weight: float = 0.1
    v2v_weight: float = 0.9
    turn_probability: float = 0.4
    terminate_on_delivery: bool = False

    def __post_init__(self):
        if self.links_per_vehicle not in (1, 2, 3):
            raise ValueError("links_per_vehicle must be 1, 2 or 3")
        if self.payload_bits <= 0 or self.payload_bits % PAYLOAD_UNIT_BITS != 0:
            raise ValueError(f"payload must be a positive multiple of {PAYLOAD_UNIT_BITS} bits")
        if self.n_vehicles < 2:
            raise ValueError("need at least two vehicles to form direct links")
        if self.links_per_vehicle > self.n_vehicles - 1:
            raise ValueError("not enough vehicles for the requested links per vehicle")
        if min(self.ricean_k_v2i, self.ricean_k_v2v) < 0:
            raise ValueError("Ricean K-factors must be non-negative")

    @classmethod
    def from_factors(cls, links_per_vehicle, payload_multiple, speed_kmh, k_v2i, k_v2v, **over):
        return cls(
            links_per_vehicle=int(links_per_vehicle),
            payload_bits=int(payload_multiple) * PAYLOAD_UNIT_BITS,
            speed_kmh=float(speed_kmh),
            ricean_k_v2i=float(k_v2i),
            ricean_k_v2v=float(k_v2v),
            **over,
        )

    @property
    def n_bands(self):
        return self.n_vehicles

    @property
    def n_links(self):
        return self.n_vehicles * self.links_per_vehicle

    @property
    def band_width_hz(self):
        return self.total_bandwidth_hz / self.n_bands

    @property
    def n_actions(self):
        return self.n_bands * N_POWER_LEVELS

    @property
    def obs_dim(self):
        return 4 * self.n_bands + 2

    @property
    def noise_mw(self):
        return 10.0 ** (self.noise_dbm / 10.0)

    @property
    def v2i_power_mw(self):
        return 10.0 ** (self.v2i_power_dbm / 10.0)

    @property
    def payload_multiple(self):
        return self.payload_bits // PAYLOAD_UNIT_BITS

    def factors(self):
        return {
            "links_per_vehicle": self.links_per_vehicle,
            "payload_multiple": self.payload_multiple,
            "speed_kmh": self.speed_kmh,
            "ricean_k_v2i": self.ricean_k_v2i,
            "ricean_k_v2v": self.ricean_k_v2v,
        }


def decode_action(index, n_bands):
    """Action index -> (sub-band, power level index)."""
    index = int(index)
    if not 0 <= index < n_bands * N_POWER_LEVELS:
        raise ValueError(f"action index {index} out of range")
    return index // N_POWER_LEVELS, index % N_POWER_LEVELS


def encode_action(band, power_idx):
    return int(band) * N_POWER_LEVELS + int(power_idx)


def power_mw_from_index(power_idx):
    return 10.0 ** (np.asarray(POWER_LEVELS_DBM)[power_idx] / 10.0)


def sinr_v2i(v2i_power_mw, gain_own_bs, v2v_power_mw, v2v_band, gain_tx_bs, noise_mw):
    """Uplink SINR per sub-band (linear).

    gain_own_bs: (A,) own-band gain of each uplink; gain_tx_bs: (N, A)
    gain from each direct-link transmitter to the base station per band.
    Direct links on band a raise the interference of uplink a.
    """
    a = gain_own_bs.shape[0]
    interference = np.zeros(a)
    np.add.at(interference, v2v_band, v2v_power_mw * gain_tx_bs[np.arange(len(v2v_band)), v2v_band])
    return v2i_power_mw * gain_own_bs / (noise_mw + interference)


def sinr_v2v(v2v_power_mw, v2v_band, gain_direct, gain_v2i_rx, gain_peer, v2i_power_mw, noise_mw):
    """Direct-link SINR on each link's chosen band (linear).

    gain_direct: (N, A) tx->rx gain per band; gain_v2i_rx: (N, A) gain
    from the uplink transmitter of band a to the link's receiver;
    gain_peer: (N, N, A), [k, n, a] = tx k -> rx n on band a.
    Returns (sinr (N,), interference (N,)) where interference excludes
    the noise floor.
    """
    n = len(v2v_band)
    idx = np.arange(n)
    interference = v2i_power_mw * gain_v2i_rx[idx, v2v_band]
    same_band = v2v_band[:, None] == v2v_band[None, :]
    np.fill_diagonal(same_band, False)
    # peer term: sum over k != n with band_k == band_n of p_k * g[k, n, band_n]
    peer_gain = gain_peer[:, idx, v2v_band]  # (k, n)
    interference = interference + (same_band.T * (v2v_power_mw[:, None] * peer_gain)).sum(axis=0)
    signal = v2v_power_mw * gain_direct[idx, v2v_band]
    return signal / (noise_mw + interference), interference


def measured_interference(v2v_power_mw, v2v_band, gain_v2i_rx, gain_peer, v2i_power_mw, noise_mw):
    """Total received power (noise + interference) per link per band, (N, A)."""
    n = gain_v2i_rx.shape[0]
    total = v2i_power_mw * gain_v2i_rx + noise_mw
    for k in range(n):
        # transmitter k contributes on its own band, to every rx but its own
        total[:, v2v_band[k]] += v2v_power_mw[k] * gain_peer[k, :, v2v_band[k]]
        total[k, v2v_band[k]] -= v2v_power_mw[k] * gain_peer[k, k, v2v_band[k]]
    return total


@dataclass
class StepResult:
    """Everything one slot produces."""

    observations: np.ndarray
    reward: float
    v2i_rates: np.ndarray
    v2v_rates: np.ndarray
    delivered_bits: np.ndarray
    remaining_bits: np.ndarray
    had_payload: np.ndarray
    success: np.ndarray
    done: bool
    slot: int


@dataclass
class ScenarioState:
    """Snapshot of the slow scenario plus the current slot's gain tensors."""

    scenario: channel.Scenario
    tx_of_link: np.ndarray
    rx_of_link: np.ndarray
    gain_bs: np.ndarray
    gain_pair: np.ndarray


class SpectrumEnv:
    """Episodic simulator; one instance owns an evolving scenario.

    Every episode covers `slots_per_episode` slots. Between episodes the
    vehicles advance by one slow-fading interval and the shadowing
    decorrelates; within an episode only fast fading changes.
    """

    def __init__(self, task, seed, upsilon=None, grid=None):
        self.task = task
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        drop_s, mobility_s, shadow_s, fading_s, calib_s = seq.spawn(5)
        self._rng_drop = np.random.default_rng(drop_s)
        self._rng_mobility = np.random.default_rng(mobility_s)
        self._rng_shadow = np.random.default_rng(shadow_s)
        self._rng_fading = np.random.default_rng(fading_s)
        self.grid = grid or channel.RoadGrid.default(task.turn_probability)
        self._scenario = None
        self._episode = 0
        self._t = 0
        self._done = True
        if upsilon is None:
            upsilon = calibrate_upsilon(task, calib_s, grid=grid)
        self.upsilon = float(upsilon)

    # -- episode control ---------------------------------------------------

    def reset(self):
        """Advance the slow scenario and start a fresh delivery episode."""
        task = self.task
        if self._scenario is None:
            self._scenario = channel.Scenario.drop(
                task.n_vehicles, task.speed_kmh, self.grid, self._rng_drop
            )
            # initial shadowing is drawn by Scenario.drop from the drop rng;
            # redirect subsequent updates to the shadow stream
        else:
            self._scenario.vehicles = self.grid.step(
                self._scenario.vehicles, task.slow_update_seconds, self._rng_mobility
            )
            disp = np.array(
                [v.speed_kmh / 3.6 * task.slow_update_seconds for v in self._scenario.vehicles]
            )
            self._scenario.shadow_bs = self._scenario.shadow_bs.advanced(disp, self._rng_shadow)
            self._scenario.shadow_v2v = self._scenario.shadow_v2v.advanced(
                disp[:, None] + disp[None, :], self._rng_shadow
            )
        self._slow_to_bs_db, self._slow_pair_db = self._scenario.slow_gains_db()
        self._assign_links()
        self._remaining = np.full(task.n_links, float(task.payload_bits))
        self._success = np.zeros(task.n_links, dtype=bool)
        self._measured = np.full((task.n_links, task.n_bands), task.noise_mw)
        self._t = 0
        self._done = False
        self._episode += 1
        self._realize_slot_gains()
        return self._build_observations()

    def _assign_links(self):
        """Each vehicle transmits to its nearest neighbours, nearest first."""
        task = self.task
        pos = self._scenario.positions()
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        tx, rx = [], []
        for i in range(task.n_vehicles):
            order = np.argsort(dist[i], kind="stable")
            for j in range(task.links_per_vehicle):
                tx.append(i)
                rx.append(int(order[j]))
        self._tx = np.array(tx)
        self._rx = np.array(rx)

    def _realize_slot_gains(self):
        task = self.task
        gain_bs, gain_pair = channel.realize_gains(
            self._slow_to_bs_db,
            self._slow_pair_db,
            task.n_bands,
            task.ricean_k_v2i,
            task.ricean_k_v2v,
            self._rng_fading,
        )
        self._gain_bs = gain_bs      # (A, bands): vehicle -> BS
        self._gain_pair = gain_pair  # (A, A, bands): tx vehicle -> rx vehicle
        bands = np.arange(task.n_bands)
        self._g_own_bs = gain_bs[bands, bands]             # uplink a on band a
        self._g_tx_bs = gain_bs[self._tx, :]               # (N, A)
        self._g_direct = gain_pair[self._tx, self._rx, :]  # (N, A)
        self._g_v2i_rx = gain_pair[:, self._rx, :][bands, :, bands].T  # (N, A)
        self._g_peer = gain_pair[self._tx][:, self._rx, :]  # (N, N, A)

    # -- views -------------------------------------------------------------

    @property
    def n_agents(self):
        return self.task.n_links

    @property
    def episode(self):
        return self._episode

    @property
    def slot(self):
        return self._t

    @property
    def done(self):
        return self._done

    def state(self):
        return ScenarioState(
            self._scenario, self._tx.copy(), self._rx.copy(),
            self._gain_bs.copy(), self._gain_pair.copy(),
        )

    def current_gains(self):
        """Global CSI of the current slot (used by the search baseline)."""
        return {
            "own_bs": self._g_own_bs,
            "tx_bs": self._g_tx_bs,
            "direct": self._g_direct,
            "v2i_rx": self._g_v2i_rx,
            "peer": self._g_peer,
        }

    def observe(self, agent):
        return self._build_observations()[agent]

    def _build_observations(self):
        task = self.task
        n, a = task.n_links, task.n_bands
        gdir = (channel.linear_to_db(self._g_direct) + GAIN_SHIFT_DB) / GAIN_SCALE_DB
        gbs = (channel.linear_to_db(self._g_tx_bs) + GAIN_SHIFT_DB) / GAIN_SCALE_DB
        gv2i = (channel.linear_to_db(self._g_v2i_rx) + GAIN_SHIFT_DB) / GAIN_SCALE_DB
        interf_dbm = channel.linear_to_db(self._measured)
        interf = (interf_dbm + INTERFERENCE_SHIFT_DBM) / INTERFERENCE_SCALE_DBM
        rem_payload = self._remaining / float(task.payload_bits)
        rem_time = (task.slots_per_episode - self._t) / task.slots_per_episode
        obs = np.concatenate(
            [
                gdir, gbs, gv2i, interf,
                rem_payload[:, None],
                np.full((n, 1), rem_time),
            ],
            axis=1,
        )
        return obs

    # -- dynamics ----------------------------------------------------------

    def step(self, actions):
        """Apply one joint action; returns the slot's StepResult."""
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        task = self.task
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (task.n_links,):
            raise ValueError(f"need one action per agent, got shape {actions.shape}")
        if np.any((actions < 0) | (actions >= task.n_actions)):
            raise ValueError("action index out of range")
        bands = actions // N_POWER_LEVELS
        power_mw = power_mw_from_index(actions % N_POWER_LEVELS)

        g_v2i = sinr_v2i(
            task.v2i_power_mw, self._g_own_bs, power_mw, bands, self._g_tx_bs, task.noise_mw
        )
        g_v2v, _ = sinr_v2v(
            power_mw, bands, self._g_direct, self._g_v2i_rx, self._g_peer,
            task.v2i_power_mw, task.noise_mw,
        )
        w = task.band_width_hz
        v2i_rates = w * np.log2(1.0 + g_v2i)
        v2v_rates = w * np.log2(1.0 + g_v2v)

        had_payload = self._remaining > 0.0
        delivered = np.where(had_payload, v2v_rates * task.slot_seconds, 0.0)
        delivered = np.minimum(delivered, self._remaining)
        self._remaining = self._remaining - delivered
        self._success |= self._remaining <= 0.0

        se_v2i = v2i_rates / w
        se_v2v = v2v_rates / w
        link_reward = np.where(had_payload, se_v2v, self.upsilon)
        reward = task.v2i_weight * se_v2i.sum() + task.v2v_weight * link_reward.sum()

        self._measured = measured_interference(
            power_mw, bands, self._g_v2i_rx, self._g_peer, task.v2i_power_mw, task.noise_mw
        )
        self._t += 1
        self._done = self._t >= task.slots_per_episode or (
            task.terminate_on_delivery and bool(np.all(self._remaining <= 0.0))
        )
        if not self._done:
            self._realize_slot_gains()
        return StepResult(
            observations=self._build_observations(),
            reward=float(reward),
            v2i_rates=v2i_rates,
            v2v_rates=v2v_rates,
            delivered_bits=delivered,
            remaining_bits=self._remaining.copy(),
            had_payload=had_payload,
            success=self._success.copy(),
            done=self._done,
            slot=self._t - 1,
        )


def recompute_reward(task, upsilon, v2i_rates, v2v_rates, had_payload):
    """The reward formula restated from a StepResult's rate fields."""
    w = task.band_width_hz
    link = np.where(np.asarray(had_payload), np.asarray(v2v_rates) / w, upsilon)
    return task.v2i_weight * (np.asarray(v2i_rates) / w).sum() + task.v2v_weight * link.sum()


def calibrate_upsilon(task, seed, episodes=CALIBRATION_EPISODES, grid=None):
    """Delivery bonus: a margin above the best rate a random policy saw.

    Runs a few throwaway episodes under uniform random actions and takes
    1.1x the largest observed per-slot per-link spectral efficiency.
    """
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_seed, action_seed = seq.spawn(2)
    env = SpectrumEnv(task, env_seed, upsilon=0.0, grid=grid)
    rng = np.random.default_rng(action_seed)
    best = 0.0
    for _ in range(episodes):
        env.reset()
        while not env.done:
            actions = rng.integers(0, task.n_actions, task.n_links)
            result = env.step(actions)
            best = max(best, float(result.v2v_rates.max()) / task.band_width_hz)
    return UPSILON_MARGIN * best


def observation_constants():
    """Normalization constants for the manifest."""
    return {
        "gain_shift_db": GAIN_SHIFT_DB,
        "gain_scale_db": GAIN_SCALE_DB,
        "interference_shift_dbm": INTERFERENCE_SHIFT_DBM,
        "interference_scale_dbm": INTERFERENCE_SCALE_DBM,
        "power_levels_dbm": list(POWER_LEVELS_DBM),
        "payload_unit_bits": PAYLOAD_UNIT_BITS,
        "upsilon_margin": UPSILON_MARGIN,
        "calibration_episodes": CALIBRATION_EPISODES,
    }
