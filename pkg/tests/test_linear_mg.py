import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nqovi.errors import ConfigurationError, GenerationError, ModelValidationError
from nqovi.linear_mg import (FeatureMap, LinearMG, joint_index, load_model, make_tabular_features,
                             model_from_dict, model_to_dict, models_equal, random_linear_mg,
                             random_tabular_mg, save_model, tabular_mg_from_tables, validate)


def test_one_hot_first_basis_vector():
    fm = make_tabular_features(2, [2, 2])
    assert fm.dim == 8
    expected = np.zeros(8)
    expected[0] = 1.0
    np.testing.assert_array_equal(fm(0, (0, 0)), expected)


def test_one_hot_unit_norm_everywhere():
    fm = make_tabular_features(3, [2, 3])
    norms = np.linalg.norm(fm.table, axis=-1)
    assert np.all(norms == 1.0)


def test_one_hot_orthonormal_gram():
    fm = make_tabular_features(3, [2, 3])
    assert fm.dim == 18
    flat = fm.table.reshape(-1, 18)
    np.testing.assert_array_equal(flat @ flat.T, np.eye(18))


def test_one_hot_rank_is_lexicographic():
    fm = make_tabular_features(3, [2, 3])
    # (x, a1, a2) = (2, 1, 0) -> 2*6 + 1*3 + 0
    assert int(np.argmax(fm(2, (1, 0)))) == 15


def test_scalar_embedding_rejected():
    with pytest.raises(ConfigurationError):
        make_tabular_features(1, [1])


def test_bad_sizes_rejected():
    with pytest.raises(ConfigurationError):
        make_tabular_features(0, [2])


def test_feature_index_errors(small_mg):
    with pytest.raises(IndexError):
        small_mg.feature(3, (0, 0))
    with pytest.raises(IndexError):
        small_mg.feature(0, (2, 0))
    with pytest.raises(IndexError):
        small_mg.feature(0, 4)


def test_simplex_features_nonnegative_sum_to_one(small_mg):
    t = small_mg.features.table
    assert t.min() >= 0
    np.testing.assert_allclose(t.sum(-1), 1.0, atol=1e-12)
    assert np.all(np.linalg.norm(t, axis=-1) <= 1.0)


def test_generator_deterministic():
    a = random_linear_mg(7, 5, 4, (2, 3), 3, 2)
    b = random_linear_mg(7, 5, 4, (2, 3), 3, 2)
    assert models_equal(a, b)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.R, b.R)
    c = random_linear_mg(8, 5, 4, (2, 3), 3, 2)
    assert not models_equal(a, c)


def test_generator_rows_sum_to_one():
    mg = random_linear_mg(1, 4, 3, [2, 2], 3, 2)
    # enumerate every (h, x, a) explicitly
    worst = 0.0
    for h in range(3):
        for x in range(3):
            for a in range(4):
                worst = max(worst, abs(sum(mg.P[h, x, a, y] for y in range(3)) - 1.0))
    assert worst <= 1e-12


def test_generator_theta_norms_reported():
    mg = random_linear_mg(1, 4, 3, [2, 2], 3, 2)
    rep = validate(mg)
    norms = [[math.sqrt(sum(v * v for v in mg.theta[h, i])) for i in range(2)] for h in range(3)]
    np.testing.assert_allclose(rep.theta_norms, norms, rtol=1e-14)
    assert rep.theta_norm_ok
    assert all(v <= 2.0 for row in norms for v in row)


def test_generator_rewards_in_range():
    mg = random_linear_mg(3, 6, 5, [3, 2], 4, 2)
    rep = validate(mg)
    assert rep.reward_range_violations == 0
    assert 0 <= mg.R.min() and mg.R.max() <= 1


def test_realizability_round_trip():
    mg = random_linear_mg(2, 5, 4, [2, 2], 3, 2)
    phi, mu, theta = mg.features.table, mg.mu, mg.theta
    for h in range(mg.H):
        for x in range(mg.num_states):
            for a in range(mg.num_joint_actions):
                np.testing.assert_allclose(mg.P[h, x, a], phi[x, a] @ mu[h], atol=1e-12)
                np.testing.assert_allclose(mg.R[h, :, x, a], theta[h] @ phi[x, a], atol=1e-12)


@pytest.mark.parametrize("kw", [dict(d=1), dict(H=1), dict(num_states=0), dict(action_dims=(0, 2))])
def test_generator_names_violated_assumption(kw):
    args = dict(seed=0, d=4, num_states=3, action_dims=(2, 2), H=3, n=2)
    args.update(kw)
    with pytest.raises(GenerationError):
        random_linear_mg(**args)


def test_tabular_model_assumptions():
    mg = random_tabular_mg(0, 3, (2, 2), 3)
    rep = validate(mg)
    assert rep.kernels_ok and rep.rewards_ok
    assert rep.feature_norm_ok and rep.theta_norm_ok
    # sum_x' ||mu_h(x')|| is only reported, whichever way it falls
    assert isinstance(rep.mu_norm_ok, bool)
    assert rep.mu_norm_sums.shape == (3,)


def test_validation_reports_bad_row_without_raising():
    S, A = 2, 2
    kernels = np.full((2, S, A, S), 0.5)
    kernels[0, 1, 0] = [0.5, 0.4]   # sums to 0.9
    rewards = np.full((2, 1, S, A), 0.5)
    mg = tabular_mg_from_tables(kernels, rewards, (2,))
    before = (mg.P.copy(), mg.R.copy())
    rep = validate(mg)
    assert rep.max_row_sum_deviation == pytest.approx(0.1, abs=1e-12)
    assert not rep.kernels_ok
    assert np.array_equal(mg.P, before[0]) and np.array_equal(mg.R, before[1])
    with pytest.raises(ModelValidationError):
        mg.check()


def test_model_arrays_read_only(small_mg):
    with pytest.raises(ValueError):
        small_mg.P[0, 0, 0, 0] = 1.0


def test_tabular_tables_embed_exactly(rng):
    kernels = rng.dirichlet(np.ones(3), size=(2, 3, 4))
    rewards = rng.uniform(size=(2, 2, 3, 4))
    mg = tabular_mg_from_tables(kernels, rewards, (2, 2))
    np.testing.assert_array_equal(mg.P, kernels)
    np.testing.assert_array_equal(mg.R, rewards)


def test_joint_index_mixed_radix():
    assert joint_index((1, 2), (2, 3)) == 5
    assert joint_index((0, 1, 1), (2, 2, 2)) == 3


@pytest.mark.parametrize("make", [lambda: random_linear_mg(4, 3, 3, (2, 2), 2, 2),
                                  lambda: random_tabular_mg(4, 2, (2, 3), 3)])
def test_json_round_trip_exact(tmp_path, make):
    mg = make()
    save_model(mg, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert models_equal(mg, back)
    doc = model_to_dict(mg)
    assert set(doc) >= {"n", "H", "num_states", "action_dims", "d", "feature_kind", "mu",
                        "theta", "s0", "seed"}
    assert np.asarray(doc["mu"]).shape == (mg.H, mg.d, mg.num_states)
    assert np.asarray(doc["theta"]).shape == (mg.H, mg.n, mg.d)


def test_json_missing_field():
    doc = model_to_dict(random_tabular_mg(0, 2, (2,), 2))
    del doc["mu"]
    with pytest.raises(ConfigurationError):
        model_from_dict(doc)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(2, 8), S=st.integers(1, 5),
       dims=st.lists(st.integers(1, 3), min_size=1, max_size=3), H=st.integers(2, 4))
def test_generator_properties(seed, d, S, dims, H):
    mg = random_linear_mg(seed, d, S, dims, H)
    np.testing.assert_allclose(mg.P.sum(-1), 1.0, atol=1e-9)
    assert mg.P.min() >= 0
    assert mg.R.min() >= -1e-9 and mg.R.max() <= 1 + 1e-9
    assert mg.features.max_norm() <= 1 + 1e-12
