import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from npgc import RankDeficiencyError
from npgc.data import fold_plan, prepare
from npgc.estimator import (
    NPGC,
    generate_permutations,
    npgc_test,
    oos_residuals,
    permutation_variances,
    quantile_estimate,
    variance_estimate,
)
from npgc.featurize import generate_bank

from conftest import make_panel
from reference import naive_oos_residuals, naive_theta


# --------------------------------------------------------------------------- #
# elementary operations


def test_oos_residuals_exact_fit_is_zero():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((30, 4))
    beta = rng.standard_normal((4, 2))
    Y = H @ beta
    R = oos_residuals(H[:20], H[20:], Y[:20], Y[20:])
    assert np.allclose(R, 0, atol=1e-10)


def test_oos_residuals_matches_normal_equations():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, N, d = int(rng.integers(12, 40)), int(rng.integers(1, 10)), int(rng.integers(1, 4))
        H = np.tanh(rng.standard_normal((n + 6, N)))
        Y = rng.standard_normal((n + 6, d))
        got = oos_residuals(H[:n], H[n:], Y[:n], Y[n:])
        assert np.allclose(got, naive_oos_residuals(H[:n], H[n:], Y[:n], Y[n:]), atol=1e-9)


def test_oos_residuals_rank_deficient():
    rng = np.random.default_rng(2)
    H = rng.standard_normal((20, 3))
    H = np.hstack([H, H[:, :1]])
    Y = rng.standard_normal((20, 1))
    with pytest.raises(RankDeficiencyError):
        oos_residuals(H[:15], H[15:], Y[:15], Y[15:])
    R = oos_residuals(H[:15], H[15:], Y[:15], Y[15:], ridge=True)
    assert np.all(np.isfinite(R))


def test_oos_residuals_more_features_than_rows():
    rng = np.random.default_rng(3)
    with pytest.raises(RankDeficiencyError):
        oos_residuals(rng.standard_normal((4, 6)), rng.standard_normal((2, 6)), np.ones(4), np.ones(2))


def test_oos_residuals_invariant_to_training_order():
    rng = np.random.default_rng(4)
    H, Y = rng.standard_normal((25, 5)), rng.standard_normal((25, 1))
    perm = rng.permutation(20)
    a = oos_residuals(H[:20], H[20:], Y[:20], Y[20:])
    b = oos_residuals(H[:20][perm], H[20:], Y[:20][perm], Y[20:])
    assert np.allclose(a, b, atol=1e-12)


def test_variance_estimate_example():
    # one realization, one featurization, two folds: (1 + 4) / 1 and (9 + 16) / 2
    grid = [[[np.array([[1.0], [2.0]]) / np.sqrt(2), np.array([[3.0], [4.0]])]]]
    assert variance_estimate(grid) == pytest.approx(((1 + 4) / 2 / 2 + 25 / 2) / 2)


def test_variance_estimate_rejects_ragged_and_missing():
    R = np.ones((2, 1))
    with pytest.raises(ValueError, match="ragged"):
        variance_estimate([[[R, R], [R]]])
    with pytest.raises(ValueError, match="missing"):
        variance_estimate([[[R, None]]])


def test_quantile_ties_count():
    assert quantile_estimate([1.0, 1.0, 2.0, 0.5]) == 0.75
    assert quantile_estimate([0.1, 0.2, 0.3, 0.4]) == 0.25
    assert quantile_estimate([5.0, 1.0, 2.0, 3.0]) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=50))
def test_quantile_bounds(theta):
    q = quantile_estimate(theta)
    assert 1 / len(theta) <= q <= 1
    assert q * len(theta) == pytest.approx(round(q * len(theta)))


# --------------------------------------------------------------------------- #
# permutations


def test_permutations_identity_first_and_valid():
    P = generate_permutations(40, 30, seed=1).perms
    assert np.array_equal(P[0], np.arange(40))
    for row in P:
        assert sorted(row.tolist()) == list(range(40))


def test_permutations_prefix_stable():
    a = generate_permutations(20, 10, seed=3).perms
    b = generate_permutations(20, 25, seed=3).perms
    assert np.array_equal(a, b[:10])


def test_permutations_roughly_uniform():
    P = generate_permutations(4, 4001, seed=0).perms[1:]
    first = np.bincount(P[:, 0], minlength=4) / len(P)
    assert np.all(np.abs(first - 0.25) < 0.03)


# --------------------------------------------------------------------------- #
# engine


@pytest.mark.parametrize("solver", ["cholesky", "qr"])
@pytest.mark.parametrize("mode", ["random", "contiguous"])
def test_engine_matches_brute_force(solver, mode):
    prep = prepare(make_panel(T_raw=64, p=2, d=2, q=1, phi=2, seed=5), lag=2)
    bank = generate_bank(prep.dims, 8, 3, seed=2)
    perms = generate_permutations(prep.n_rows, 6, seed=4).perms
    plan = fold_plan(prep.n_rows, 4, seed=1, mode=mode)
    got = permutation_variances(prep, bank, perms, plan, solver=solver).mean(axis=(1, 2, 3))
    assert np.allclose(got, naive_theta(prep, bank, perms, plan), rtol=0, atol=1e-9)


def test_engine_subset_of_folds():
    prep = prepare(make_panel(T_raw=60, seed=6), lag=2)
    bank = generate_bank(prep.dims, 6, 2, seed=0)
    perms = generate_permutations(prep.n_rows, 4, seed=0).perms
    plan = fold_plan(prep.n_rows, 5, seed=0)
    got = permutation_variances(prep, bank, perms, plan, test_folds=[3, 4]).mean(axis=(1, 2, 3))
    assert np.allclose(got, naive_theta(prep, bank, perms, plan, folds=[3, 4]), atol=1e-9)


def test_engine_trace_shape():
    prep = prepare(make_panel(T_raw=50, phi=3, seed=1), lag=1)
    bank = generate_bank(prep.dims, 5, 4, seed=0)
    perms = generate_permutations(prep.n_rows, 7, seed=0).perms
    tr = permutation_variances(prep, bank, perms, fold_plan(prep.n_rows, 5))
    assert tr.shape == (7, 3, 4, 5)
    assert np.all(tr > 0)


def test_engine_rejects_too_many_features():
    prep = prepare(make_panel(T_raw=30, seed=1), lag=1)
    bank = generate_bank(prep.dims, 25, 1, seed=0)
    with pytest.raises(ValueError, match="smallest training size"):
        permutation_variances(prep, bank, np.arange(prep.n_rows)[None], fold_plan(prep.n_rows, 5))


def test_engine_rank_deficient_design_uses_ridge():
    prep = prepare(make_panel(T_raw=40, seed=2), lag=1)
    bank = generate_bank(prep.dims, 6, 1, seed=0)
    W = bank.weights[0].copy()
    W[:, 1] = W[:, 0]  # duplicated features
    bad = type(bank)((W,), bank.dims, bank.n_features, bank.seed)
    plan = fold_plan(prep.n_rows, 4)
    perms = np.arange(prep.n_rows)[None]
    with pytest.raises(RankDeficiencyError):
        permutation_variances(prep, bad, perms, plan)
    tr = permutation_variances(prep, bad, perms, plan, ridge=True)
    assert np.all(np.isfinite(tr))


# --------------------------------------------------------------------------- #
# full test


def _test(prep, **kw):
    base = dict(n_permutations=30, n_featurizations=3, n_features=10, n_folds=5, seed=7)
    base.update(kw)
    return npgc_test(prep, **base)


def test_determinism_and_thread_invariance(small_prepared):
    a = _test(small_prepared)
    b = _test(small_prepared)
    c = _test(small_prepared, n_jobs=3)
    assert np.array_equal(a.theta, b.theta) and a.q_hat == b.q_hat
    assert np.array_equal(a.theta, c.theta)


def test_solvers_agree(small_prepared):
    a = _test(small_prepared, solver="cholesky")
    b = _test(small_prepared, solver="qr")
    assert np.allclose(a.theta, b.theta, atol=1e-10)
    assert a.q_hat == b.q_hat


def test_identity_only_permutations_give_q_one(small_prepared):
    T = small_prepared.n_rows
    res = _test(small_prepared, permutations=np.tile(np.arange(T), (5, 1)))
    assert res.q_hat == 1.0
    assert np.allclose(res.theta, res.theta[0])


def test_strong_signal_detected_and_null_not():
    causal = prepare(make_panel(T_raw=203, seed=1, signal=3.0), lag=3)
    res = _test(causal, n_permutations=50, n_features=20)
    assert res.causal and res.q_hat == pytest.approx(1 / 50)
    null = prepare(make_panel(T_raw=203, seed=1), lag=3)
    assert _test(null, n_permutations=50, n_features=20).q_hat > 0.05


def test_result_serialization(tmp_path, small_prepared):
    res = _test(small_prepared, keep_trace=True)
    d = res.to_dict()
    assert d["decision"] in ("causal", "not-causal")
    assert d["config"]["M"] == 30 and d["config"]["K"] == 5
    res.to_json(tmp_path / "r.json")
    res.write_theta_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "m,theta" and len(lines) == 31
    assert float(lines[1].split(",")[1]) == res.theta[0]
    assert res.trace.shape == (30, 1, 3, 5)


def test_alpha_validation(small_prepared):
    with pytest.raises(ValueError):
        _test(small_prepared, alpha=1.5)


def test_estimator_api():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((120, 2))
    y = rng.standard_normal((120, 1))
    y[1:, 0] += 2 * np.tanh(X[:-1, 0])
    est = NPGC(lag=2, n_permutations=40, n_featurizations=3, n_features=15, random_state=0)
    params = est.get_params()
    assert params["lag"] == 2 and params["random_state"] == 0
    est.fit(X, y)
    assert est.theta_.shape == (40,)
    assert est.causal_ is True
    again = clone(est).fit(X, y)
    assert np.array_equal(again.theta_, est.theta_)
    est.set_params(alpha=0.001)
    assert est.get_params()["alpha"] == 0.001


def test_estimator_auto_dimension():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((160, 1))
    y = rng.standard_normal((160, 1))
    est = NPGC(lag=1, n_permutations=20, n_featurizations=2, n_features="auto", random_state=1).fit(X, y)
    assert est.scan_ is not None
    assert est.n_features_ == est.scan_.chosen
    assert est.result_.config["test_folds"] == [3, 4]


def test_estimator_multiple_realizations():
    rng = np.random.default_rng(2)
    Xs = [rng.standard_normal((60, 2)) for _ in range(3)]
    ys = [rng.standard_normal((60, 1)) for _ in range(3)]
    est = NPGC(lag=1, n_permutations=10, n_featurizations=2, n_features=8, random_state=0).fit(Xs, ys)
    assert est.result_.config["phi"] == 3
