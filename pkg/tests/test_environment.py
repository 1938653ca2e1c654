"""Decision process: SINRs, rates, rewards, payload accounting, observations."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2xshare import environment as env_mod
from v2xshare.environment import (
    PAYLOAD_UNIT_BITS,
    POWER_LEVELS_DBM,
    SpectrumEnv,
    TaskConfig,
    decode_action,
    encode_action,
    measured_interference,
    recompute_reward,
    sinr_v2i,
    sinr_v2v,
)

UPSILON = 9.0  # fixed bonus: keeps these tests independent of calibration


def make_env(seed=0, **kw):
    task = TaskConfig(**kw)
    return SpectrumEnv(task, seed, upsilon=UPSILON)


def db(x):
    return 10.0 ** (x / 10.0)


# -- task config ---------------------------------------------------------------

def test_task_validation():
    with pytest.raises(ValueError):
        TaskConfig(links_per_vehicle=4)
    with pytest.raises(ValueError):
        TaskConfig(payload_bits=1000)
    with pytest.raises(ValueError):
        TaskConfig(n_vehicles=1)
    with pytest.raises(ValueError):
        TaskConfig(ricean_k_v2i=-1.0)


def test_task_from_factors_payload_units():
    t = TaskConfig.from_factors(1, 3, 20.0, 10.0, 0.0)
    assert t.payload_bits == 3 * PAYLOAD_UNIT_BITS == 25440


def test_action_codec_bijection():
    t = TaskConfig()
    seen = set()
    for idx in range(t.n_actions):
        band, p = decode_action(idx, t.n_bands)
        assert encode_action(band, p) == idx
        seen.add((band, p))
    assert len(seen) == t.n_actions
    with pytest.raises(ValueError):
        decode_action(t.n_actions, t.n_bands)


# -- link counts and reset ------------------------------------------------------

def test_link_counts_per_vehicle():
    assert make_env(links_per_vehicle=1).n_agents == 4
    assert make_env(links_per_vehicle=2).n_agents == 8
    assert make_env(links_per_vehicle=3).n_agents == 12


def test_reset_deterministic_and_normalized():
    e1, e2 = make_env(seed=5), make_env(seed=5)
    o1, o2 = e1.reset(), e2.reset()
    np.testing.assert_array_equal(o1, o2)
    assert o1.shape == (4, 18)
    # full budgets at reset
    np.testing.assert_array_equal(o1[:, -2], 1.0)
    np.testing.assert_array_equal(o1[:, -1], 1.0)
    assert np.all(np.isfinite(o1))


def test_observation_dimension_fixed_across_grids():
    from v2xshare.meta import generate_task_set

    for name in ("243", "72", "432"):
        for task in generate_task_set(name).tasks[:: max(1, 40)]:
            assert task.obs_dim == 18


def test_first_slot_interference_is_noise_floor():
    e = make_env(seed=6)
    obs = e.reset()
    expected = (e.task.noise_dbm + env_mod.INTERFERENCE_SHIFT_DBM) / env_mod.INTERFERENCE_SCALE_DBM
    np.testing.assert_allclose(obs[:, 12:16], expected, atol=1e-12)


# -- SINR formulas ---------------------------------------------------------------

def test_sinr_v2i_no_interference():
    # 23 dBm through -90.5 dB onto -114 dBm noise -> 46.5 dB
    gain = np.array([db(-90.5)])
    out = sinr_v2i(db(23.0), gain, np.array([]), np.array([], dtype=int),
                   np.zeros((0, 1)), db(-114.0))
    assert 10 * math.log10(out[0]) == pytest.approx(46.5, abs=1e-9)
    assert out[0] == pytest.approx(4.4668e4, rel=1e-4)


def test_sinr_v2i_interferer_strictly_decreases():
    gain = np.array([db(-90.5)])
    quiet = sinr_v2i(db(23.0), gain, np.array([db(5.0)]), np.array([0]),
                     np.array([[db(-120.0)]]), db(-114.0))
    silent = sinr_v2i(db(23.0), gain, np.array([1e-13]), np.array([0]),
                      np.array([[db(-120.0)]]), db(-114.0))
    assert quiet[0] < silent[0]


def test_sinr_v2v_single_link_clean_band():
    # no uplink power, single link: gamma = P g / sigma^2
    g_direct = np.array([[db(-60.0)]])
    sinr, interf = sinr_v2v(np.array([db(5.0)]), np.array([0]), g_direct,
                            np.zeros((1, 1)), np.zeros((1, 1, 1)), 0.0, db(-114.0))
    assert sinr[0] == pytest.approx(db(5.0) * db(-60.0) / db(-114.0), rel=1e-12)
    assert interf[0] == 0.0


def test_sinr_v2v_symmetric_links_equal():
    g_direct = np.full((2, 1), db(-60.0))
    g_peer = np.full((2, 2, 1), db(-80.0))
    g_v2i = np.full((2, 1), db(-95.0))
    sinr, _ = sinr_v2v(np.full(2, db(23.0)), np.zeros(2, dtype=int), g_direct,
                       g_v2i, g_peer, db(23.0), db(-114.0))
    assert sinr[0] == pytest.approx(sinr[1], rel=1e-15)


def test_two_link_interference_channel_closed_form():
    # one sub-band, one uplink, one direct link: both SINRs by hand
    p_u, p_d = db(23.0), db(15.0)
    g_ub, g_dd = db(-70.0), db(-65.0)   # uplink->bs, direct tx->rx
    g_db_, g_ud = db(-88.0), db(-92.0)  # direct tx->bs, uplink->direct rx
    noise = db(-114.0)
    up = sinr_v2i(p_u, np.array([g_ub]), np.array([p_d]), np.array([0]),
                  np.array([[g_db_]]), noise)
    down, _ = sinr_v2v(np.array([p_d]), np.array([0]), np.array([[g_dd]]),
                       np.array([[g_ud]]), np.zeros((1, 1, 1)), p_u, noise)
    assert up[0] == pytest.approx(p_u * g_ub / (noise + p_d * g_db_), rel=1e-12)
    assert down[0] == pytest.approx(p_d * g_dd / (noise + p_u * g_ud), rel=1e-12)


def _oracle_db_domain(n, a, p_v2i_dbm, noise_dbm, bands, powers_dbm,
                      own_bs_db, tx_bs_db, direct_db, v2i_rx_db, peer_db):
    """Scalar dB-domain recomputation of both SINR families."""
    v2i = np.zeros(a)
    for band in range(a):
        interf = 0.0
        for k in range(n):
            if bands[k] == band:
                interf += 10 ** ((powers_dbm[k] + tx_bs_db[k][band]) / 10.0)
        sig = 10 ** ((p_v2i_dbm + own_bs_db[band]) / 10.0)
        v2i[band] = sig / (10 ** (noise_dbm / 10.0) + interf)
    v2v = np.zeros(n)
    for i in range(n):
        band = bands[i]
        interf = 10 ** ((p_v2i_dbm + v2i_rx_db[i][band]) / 10.0)
        for k in range(n):
            if k != i and bands[k] == band:
                interf += 10 ** ((powers_dbm[k] + peer_db[k][i][band]) / 10.0)
        sig = 10 ** ((powers_dbm[i] + direct_db[i][band]) / 10.0)
        v2v[i] = sig / (10 ** (noise_dbm / 10.0) + interf)
    return v2i, v2v


def test_sinr_matches_db_domain_oracle_random():
    rng = np.random.default_rng(99)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        a = int(rng.integers(1, 4))
        bands = rng.integers(0, a, n)
        powers_dbm = rng.choice(POWER_LEVELS_DBM, n)
        own_bs_db = rng.uniform(-110, -60, a)
        tx_bs_db = rng.uniform(-110, -60, (n, a))
        direct_db = rng.uniform(-90, -50, (n, a))
        v2i_rx_db = rng.uniform(-110, -60, (n, a))
        peer_db = rng.uniform(-110, -60, (n, n, a))
        got_v2i = sinr_v2i(db(23.0), db(own_bs_db), db(powers_dbm), bands,
                           db(tx_bs_db), db(-114.0))
        got_v2v, _ = sinr_v2v(db(powers_dbm), bands, db(direct_db), db(v2i_rx_db),
                              db(peer_db), db(23.0), db(-114.0))
        want_v2i, want_v2v = _oracle_db_domain(
            n, a, 23.0, -114.0, bands, powers_dbm, own_bs_db, tx_bs_db,
            direct_db, v2i_rx_db, peer_db,
        )
        np.testing.assert_allclose(got_v2i, want_v2i, rtol=1e-9)
        np.testing.assert_allclose(got_v2v, want_v2v, rtol=1e-9)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_interference_monotone(seed):
    # raising any transmitter's power never helps any victim
    rng = np.random.default_rng(seed)
    n, a = 3, 2
    bands = rng.integers(0, a, n)
    powers = db(rng.uniform(-10, 23, n))
    direct = db(rng.uniform(-90, -50, (n, a)))
    v2i_rx = db(rng.uniform(-110, -60, (n, a)))
    peer = db(rng.uniform(-110, -60, (n, n, a)))
    tx_bs = db(rng.uniform(-110, -60, (n, a)))
    own_bs = db(rng.uniform(-110, -60, a))
    base_v2i = sinr_v2i(db(23.0), own_bs, powers, bands, tx_bs, db(-114.0))
    base_v2v, _ = sinr_v2v(powers, bands, direct, v2i_rx, peer, db(23.0), db(-114.0))
    k = int(rng.integers(0, n))
    raised = powers.copy()
    raised[k] *= 10.0
    up_v2i = sinr_v2i(db(23.0), own_bs, raised, bands, tx_bs, db(-114.0))
    up_v2v, _ = sinr_v2v(raised, bands, direct, v2i_rx, peer, db(23.0), db(-114.0))
    assert np.all(up_v2i <= base_v2i + 1e-18)
    mask = np.arange(n) != k
    assert np.all(up_v2v[mask] <= base_v2v[mask] * (1 + 1e-12))


def test_rate_at_46_5_db():
    w = 1e6
    gamma = 10.0 ** 4.65
    rate = w * math.log2(1.0 + gamma)
    assert rate == pytest.approx(15.447e6, rel=1e-3)


# -- stepping ---------------------------------------------------------------------

def test_step_silence_limit():
    e = make_env(seed=7)
    e.reset()
    # clean-uplink rates from the pre-step gains
    gains = e.current_gains()
    clean = e.task.band_width_hz * np.log2(
        1.0 + e.task.v2i_power_mw * gains["own_bs"] / e.task.noise_mw
    )
    silent = np.array([encode_action(b, 3) for b in range(4)])  # -100 dBm
    result = e.step(silent)
    assert np.all(result.v2v_rates < 1.0)  # essentially zero bit/s
    np.testing.assert_allclose(result.v2i_rates, clean, rtol=1e-6)


def test_step_reward_recomputable():
    e = make_env(seed=8)
    e.reset()
    rng = np.random.default_rng(0)
    while not e.done:
        result = e.step(rng.integers(0, e.task.n_actions, e.n_agents))
        again = recompute_reward(e.task, UPSILON, result.v2i_rates,
                                 result.v2v_rates, result.had_payload)
        assert result.reward == pytest.approx(again, abs=1e-9)


def test_step_payload_monotone_and_success_equivalence():
    e = make_env(seed=9, payload_bits=1 * PAYLOAD_UNIT_BITS)
    e.reset()
    rng = np.random.default_rng(1)
    prev = np.full(e.n_agents, float(e.task.payload_bits))
    rate_sum = np.zeros(e.n_agents)
    last = None
    while not e.done:
        result = e.step(rng.integers(0, e.task.n_actions, e.n_agents))
        assert np.all(result.remaining_bits <= prev + 1e-12)
        # only slots before completion count toward the delivered sum
        rate_sum += np.where(result.had_payload,
                             result.v2v_rates * e.task.slot_seconds, 0.0)
        prev = result.remaining_bits
        last = result
    delivered_enough = rate_sum >= e.task.payload_bits - 1e-9
    np.testing.assert_array_equal(last.success, delivered_enough)
    assert last.done


def test_step_bonus_after_delivery():
    # a tiny payload finishes quickly; later slots pay the bonus
    e = make_env(seed=10, payload_bits=PAYLOAD_UNIT_BITS)
    e.reset()
    best = np.array([encode_action(b % 4, 0) for b in range(e.n_agents)])
    saw_bonus = False
    while not e.done:
        result = e.step(best)
        if not result.had_payload.all():
            expected = recompute_reward(e.task, UPSILON, result.v2i_rates,
                                        result.v2v_rates, result.had_payload)
            assert result.reward == pytest.approx(expected, abs=1e-9)
            saw_bonus = True
    assert saw_bonus, "payload never finished; pick an easier seed"


def test_observation_payload_zero_after_delivery():
    e = make_env(seed=10, payload_bits=PAYLOAD_UNIT_BITS)
    e.reset()
    best = np.array([encode_action(b % 4, 0) for b in range(e.n_agents)])
    while not e.done:
        result = e.step(best)
        done_links = result.remaining_bits <= 0.0
        np.testing.assert_array_equal(result.observations[done_links, -2], 0.0)


def test_step_after_done_raises():
    e = make_env(seed=11)
    e.reset()
    for _ in range(e.task.slots_per_episode):
        e.step(np.zeros(e.n_agents, dtype=int))
    with pytest.raises(RuntimeError):
        e.step(np.zeros(e.n_agents, dtype=int))


def test_step_validates_actions():
    e = make_env(seed=12)
    e.reset()
    with pytest.raises(ValueError):
        e.step(np.zeros(e.n_agents + 1, dtype=int))
    with pytest.raises(ValueError):
        e.step(np.full(e.n_agents, e.task.n_actions))


def test_episode_rollout_deterministic():
    def rollout(seed):
        e = make_env(seed=13)
        rng = np.random.default_rng(seed)
        rewards = []
        for _ in range(3):
            e.reset()
            while not e.done:
                r = e.step(rng.integers(0, e.task.n_actions, e.n_agents))
                rewards.append(r.reward)
        return np.array(rewards)

    np.testing.assert_array_equal(rollout(3), rollout(3))


def test_slow_fading_constant_within_episode():
    e = make_env(seed=14)
    e.reset()
    slow_before = e._slow_pair_db.copy()  # noqa: SLF001
    for _ in range(10):
        e.step(np.zeros(e.n_agents, dtype=int))
    np.testing.assert_array_equal(e._slow_pair_db, slow_before)  # noqa: SLF001
    e.reset()
    assert not np.array_equal(e._slow_pair_db, slow_before)  # noqa: SLF001


def test_measured_interference_excludes_own_signal():
    n, a = 2, 2
    peer = np.zeros((n, n, a))
    peer[0, 0, 0] = 1.0   # own channel, must not self-interfere
    peer[0, 1, 0] = 0.25  # tx 0 -> rx 1 on band 0
    v2i_rx = np.zeros((n, a))
    got = measured_interference(np.array([2.0, 0.0]), np.array([0, 1]),
                                v2i_rx, peer, 0.0, 1e-12)
    assert got[0, 0] == pytest.approx(1e-12)
    assert got[1, 0] == pytest.approx(1e-12 + 0.5)


def test_calibrated_bonus_deterministic():
    task = TaskConfig()
    u1 = env_mod.calibrate_upsilon(task, 77)
    u2 = env_mod.calibrate_upsilon(task, 77)
    assert u1 == u2
    assert u1 > 0.0


def test_terminate_on_delivery_flag():
    task = TaskConfig(payload_bits=PAYLOAD_UNIT_BITS, terminate_on_delivery=True)
    e = SpectrumEnv(task, 10, upsilon=UPSILON)
    e.reset()
    best = np.array([encode_action(b % 4, 0) for b in range(e.n_agents)])
    slots = 0
    while not e.done:
        result = e.step(best)
        slots += 1
    assert slots < task.slots_per_episode
    assert np.all(result.success)
