import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nqovi.baseline import baseline_lsvi_ucb
from nqovi.errors import ConfigurationError, ContractError, NumericError
from nqovi.learner import (GramState, LearnerConfig, NQOVI, OptimisticQ, beta_from_theorem,
                           gram_update, optimistic_q_value, regress_weights, regression_targets, run)
from nqovi.linear_mg import random_linear_mg, random_tabular_mg, tabular_mg_from_tables
from oracles import tabular_q_sequence


def test_beta_formula_value():
    expected = float(4 * mpmath.sqrt(mpmath.log(400)))
    assert beta_from_theorem(1.0, 2, 10, 2, 0.1) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(9.7910, abs=5e-5)


def test_beta_zero_scale_and_linearity():
    assert beta_from_theorem(0.0, 4, 100, 3, 0.1) == 0.0
    b = beta_from_theorem(0.7, 4, 100, 3, 0.1)
    assert beta_from_theorem(1.4, 4, 100, 3, 0.1) == pytest.approx(2 * b, rel=1e-15)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.5])
def test_beta_delta_domain(delta):
    with pytest.raises(ConfigurationError):
        beta_from_theorem(1.0, 2, 10, 2, delta)


def test_beta_rejects_empty_sizes():
    with pytest.raises(ConfigurationError):
        beta_from_theorem(1.0, 0, 1, 1, 0.5)


def test_gram_update_axis_vector():
    gs = gram_update(GramState(2, 1.0), np.array([1.0, 0.0]))
    np.testing.assert_array_equal(gs.matrix, [[2, 0], [0, 1]])
    np.testing.assert_allclose(gs.inverse, [[0.5, 0], [0, 1]], atol=1e-15)


def test_gram_update_zero_vector():
    gs = gram_update(GramState(2, 1.0), np.zeros(2))
    np.testing.assert_array_equal(gs.matrix, np.eye(2))
    np.testing.assert_array_equal(gs.inverse, np.eye(2))


def test_gram_update_rejects_nonfinite():
    with pytest.raises(NumericError):
        GramState(2).update(np.array([np.nan, 0.0]))


def test_gram_determinant_and_spectrum(rng):
    d, K, lam = 4, 300, 1.0
    gs = GramState(d, lam, refresh=64, track_drift=True)
    prev = np.linalg.det(gs.matrix)
    for _ in range(K):
        phi = rng.normal(size=d)
        phi /= max(1.0, np.linalg.norm(phi))
        gs.update(phi)
        det = np.linalg.det(gs.matrix)
        assert det >= prev * (1 - 1e-12)
        prev = det
        np.testing.assert_array_equal(gs.matrix, gs.matrix.T)
        assert np.linalg.eigvalsh(gs.matrix).min() >= lam - 1e-12
    assert prev <= (K + lam) ** d
    assert gs.max_drift_refresh <= 1e-8
    assert gs.max_drift_between <= 1e-6


def test_regress_empty_history():
    gs = GramState(3)
    np.testing.assert_array_equal(regress_weights(gs, np.zeros((0, 3)), np.zeros(0)), np.zeros(3))


def test_regress_one_hot_single_sample():
    gs = GramState(4, 1.0)
    phi = np.eye(4)[2]
    gs.update(phi)
    w = regress_weights(gs, phi[None], np.array([0.8]))
    np.testing.assert_allclose(w, [0, 0, 0.4, 0], atol=1e-15)


def test_regress_length_mismatch():
    with pytest.raises(ContractError):
        regress_weights(GramState(2), np.zeros((3, 2)), np.zeros(2))


def test_weight_bound_small_case(rng):
    H, d, lam, k = 2, 2, 1.0, 5
    bound = (1 + H) * math.sqrt(d * (k - 1) / lam)
    assert bound == pytest.approx(8.4853, abs=5e-5)
    for _ in range(200):
        gs = GramState(d, lam)
        feats = rng.dirichlet(np.ones(d), size=k - 1) * rng.uniform(0, 1, size=(k - 1, 1))
        for f in feats:
            gs.update(f)
        y = rng.uniform(0, 1 + H, size=k - 1)
        assert np.linalg.norm(regress_weights(gs, feats, y)) <= bound + 1e-8


def test_optimistic_q_examples():
    gs = GramState(2)
    phi = np.array([0.6, 0.8])
    assert optimistic_q_value(np.zeros(2), 10.0, gs, phi, 2) == 2.0
    w = np.array([0.5, 0.0])          # w.phi = 0.3
    assert optimistic_q_value(w, 0.2, gs, phi, 2) == pytest.approx(0.5, abs=1e-15)
    assert optimistic_q_value(w, 5.0, gs, np.zeros(2), 2) == 0.0


def test_first_episode_pure_bonus(small_mg):
    cfg = LearnerConfig(K=1, c_beta=0.05, seed=0)
    rec = run(small_mg, cfg)
    assert np.all(rec.weights[0] == 0)
    np.testing.assert_array_equal(rec.gram_inv[0], np.broadcast_to(np.eye(small_mg.d), rec.gram_inv[0].shape))
    q = rec.episode_q(1, small_mg)
    phi = small_mg.features.table
    expect = np.minimum(rec.beta * np.sqrt((phi ** 2).sum(-1)), small_mg.H)
    for h in range(small_mg.H):
        for x in range(small_mg.num_states):
            np.testing.assert_allclose(q.values(h, x), np.repeat(expect[x][:, None], 2, 1), atol=1e-15)


def test_zero_beta_first_policy_is_deterministic(small_mg):
    rec = run(small_mg, LearnerConfig(K=1, beta=0.0, seed=0))
    # every stage game is all zero; the lexicographic pure rule picks action (0, 0)
    assert np.all(rec.actions == 0)


def test_targets_empty_and_terminal(small_mg):
    learner = NQOVI(small_mg, LearnerConfig(K=3, c_beta=0.1))
    q = learner.plan()
    assert regression_targets(q, 0, np.zeros((0, 2)), np.zeros(0, dtype=int)).shape == (0, 2)
    r = np.array([[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_array_equal(regression_targets(q, small_mg.H - 1, r, np.array([0, 1])), r)


def test_targets_single_agent_use_max():
    mg = random_linear_mg(5, 3, 3, (3,), 3, 1)
    learner = NQOVI(mg, LearnerConfig(K=10, c_beta=0.02, seed=1))
    for _ in range(6):
        learner.run_episode(learner.plan())
    q = learner.plan()
    r = np.array([[0.2], [0.5], [0.1]])
    nxt = np.array([0, 2, 2])
    y = regression_targets(q, 0, r, nxt)
    expect = r[:, 0] + np.array([q.values(1, x)[:, 0].max() for x in nxt])
    np.testing.assert_allclose(y[:, 0], expect, atol=1e-15)


def test_targets_share_one_equilibrium(small_mg):
    learner = NQOVI(small_mg, LearnerConfig(K=20, c_beta=0.02, seed=3))
    for _ in range(10):
        learner.run_episode(learner.plan())
    q = learner.plan()
    y = regression_targets(q, 0, np.zeros((3, 2)), np.array([1, 1, 2]))
    for x, row in zip([1, 1, 2], y):
        prof = q.profile(1, x).joint()
        np.testing.assert_allclose(row, prof @ q.values(1, x), atol=1e-15)


def test_episode_shape_and_start(small_mg):
    rec = run(small_mg, LearnerConfig(K=5, c_beta=0.1, seed=2))
    assert rec.states.shape == (5, small_mg.H + 1)
    assert np.all(rec.states[:, 0] == small_mg.s0)
    assert rec.actions.shape == (5, small_mg.H)
    for k in range(5):
        for h in range(small_mg.H):
            np.testing.assert_array_equal(rec.rewards[k, h], small_mg.R[h, :, rec.states[k, h], rec.actions[k, h]])


def test_deterministic_chain_states_follow_actions():
    S, dims, H = 3, (2,), 3
    kernels = np.zeros((H, S, 2, S))
    for h in range(H):
        for x in range(S):
            kernels[h, x, 0, x] = 1.0
            kernels[h, x, 1, (x + 1) % S] = 1.0
    mg = tabular_mg_from_tables(kernels, np.full((H, 1, S, 2), 0.5), dims)
    rec = run(mg, LearnerConfig(K=8, c_beta=0.1, seed=4))
    for k in range(8):
        for h in range(H):
            x, a = rec.states[k, h], rec.actions[k, h]
            assert rec.states[k, h + 1] == (x if a == 0 else (x + 1) % S)


def test_run_deterministic(small_mg):
    cfg = LearnerConfig(K=25, c_beta=0.1, seed=9)
    a, b = run(small_mg, cfg), run(small_mg, cfg)
    for name in ("states", "actions", "rewards", "features", "weights", "potentials", "gram_inv"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_replay_reconstructs_run(small_mg):
    cfg = LearnerConfig(K=30, c_beta=0.1, seed=9)
    rec = run(small_mg, cfg)
    again = run(small_mg, cfg, replay=rec)
    assert np.array_equal(again.weights, rec.weights)
    assert np.array_equal(again.states, rec.states)


def test_run_invariants(small_mg):
    cfg = LearnerConfig(K=150, c_beta=0.2, seed=1, refresh=16)
    rec = run(small_mg, cfg)
    H, d = small_mg.H, small_mg.d
    k = np.arange(1, cfg.K + 1)
    bound = (1 + H) * np.sqrt(d * (k - 1) / cfg.lam)
    assert np.all(np.linalg.norm(rec.weights, axis=-1) <= bound[:, None, None] + 1e-8)
    assert np.all(rec.potentials.sum(0) <= 2 * d * math.log(cfg.K + 1) + 1e-6)
    assert rec.max_drift_refresh <= 1e-8 and rec.max_drift_between <= 1e-6
    for kk in (1, 50, 150):
        q = rec.episode_q(kk, small_mg)
        for h in range(H):
            for x in range(small_mg.num_states):
                assert q.values(h, x).max() <= H


def test_single_agent_matches_lsvi_ucb():
    mg = random_linear_mg(21, 5, 4, (3,), 3, 1)
    cfg = LearnerConfig(K=120, c_beta=0.03, seed=6)
    a, b = run(mg, cfg), baseline_lsvi_ucb(mg, cfg)
    assert np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.states, b.states)
    assert np.abs(a.weights - b.weights).max() <= 1e-10
    assert np.abs(a.gram_inv - b.gram_inv).max() <= 1e-10


def test_baseline_rejects_multiagent(small_mg):
    with pytest.raises(ContractError):
        baseline_lsvi_ucb(small_mg, LearnerConfig(K=2))


def test_tabular_consistency_short():
    mg = random_tabular_mg(2, 2, (2, 2), 2)
    cfg = LearnerConfig(K=30, c_beta=0.05, seed=0)
    rec = run(mg, cfg)
    for k, Q in tabular_q_sequence(mg, rec.states, rec.actions, rec.beta):
        q = rec.episode_q(k, mg)
        lin = np.stack([[q.values(h, x) for x in range(mg.num_states)] for h in range(mg.H)])
        np.testing.assert_allclose(lin, Q, atol=1e-9)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        LearnerConfig(K=0)
    with pytest.raises(ConfigurationError):
        LearnerConfig(K=1, lam=0.0)
    with pytest.raises(ConfigurationError):
        LearnerConfig(K=1, beta=-1.0)
    with pytest.raises(ConfigurationError):
        LearnerConfig(K=1, refresh=0)
    cfg = LearnerConfig(K=7, c_beta=0.3, delta=0.05, seed=4)
    assert LearnerConfig.from_dict(cfg.as_dict()) == cfg


# ---------------------------------------------------------------- properties

_feature_seqs = st.integers(2, 6).flatmap(lambda d: st.lists(
    st.lists(st.floats(0, 1, allow_nan=False), min_size=d, max_size=d), min_size=1, max_size=80))


@settings(max_examples=60, deadline=None)
@given(_feature_seqs, st.sampled_from([0.5, 1.0, 3.0]), st.integers(1, 16))
def test_gram_inverse_tracks_direct(seq, lam, refresh):
    feats = np.array(seq)
    feats /= np.maximum(1.0, np.linalg.norm(feats, axis=1, keepdims=True))
    gs = GramState(feats.shape[1], lam, refresh=refresh)
    for f in feats:
        gs.update(f)
    direct = lam * np.eye(feats.shape[1]) + feats.T @ feats
    np.testing.assert_allclose(gs.matrix, direct, atol=1e-12)
    np.testing.assert_allclose(gs.inverse, np.linalg.inv(direct), atol=1e-8)
    assert np.linalg.eigvalsh(gs.matrix).min() >= lam - 1e-12


@settings(max_examples=60, deadline=None)
@given(_feature_seqs, st.integers(1, 4), st.integers(0, 2**31))
def test_ridge_weights_within_bound(seq, H, seed):
    feats = np.array(seq)
    feats /= np.maximum(1.0, np.linalg.norm(feats, axis=1, keepdims=True))
    y = np.random.default_rng(seed).uniform(0, 1 + H, size=len(feats))
    gs = GramState(feats.shape[1], 1.0)
    for f in feats:
        gs.update(f)
    w = regress_weights(gs, feats, y)
    assert np.linalg.norm(w) <= (1 + H) * math.sqrt(feats.shape[1] * len(feats)) + 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 3), st.integers(1, 12))
def test_q_never_exceeds_horizon(seed, H, K):
    mg = random_linear_mg(seed, 3, 2, (2, 2), H, 2)
    rec = run(mg, LearnerConfig(K=K, c_beta=0.5, seed=seed))
    q = rec.episode_q(K, mg)
    for h in range(H):
        for x in range(mg.num_states):
            assert q.values(h, x).max() <= H
            assert q.solution(h, x).exploitability <= 1e-6
