import numpy as np
import pytest
from sklearn.base import clone
from sklearn.linear_model import LinearRegression
from sklearn.pipeline import make_pipeline

from npgc.featurize import FeaturizerBank, RandomFeatureTransformer, featurize, generate_bank


def test_bank_shapes_and_intercept_row():
    bank = generate_bank((3, 1, 6), n_features=20, n_featurizations=4, seed=1)
    assert len(bank) == 4
    assert bank.n_inputs == 11
    assert all(W.shape == (11, 20) for W in bank.weights)


def test_bank_is_deterministic_and_seed_sensitive():
    a = generate_bank((2, 0, 2), 10, 3, seed=5)
    b = generate_bank((2, 0, 2), 10, 3, seed=5)
    c = generate_bank((2, 0, 2), 10, 3, seed=6)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_bank_prefix_is_stable_in_count():
    short = generate_bank((2, 1, 2), 10, 2, seed=3)
    long = generate_bank((2, 1, 2), 10, 5, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(short.weights, long.weights[:2]))


def test_weights_look_standard_normal():
    W = np.concatenate([w.ravel() for w in generate_bank((3, 2, 5), 100, 20, seed=0).weights])
    assert abs(W.mean()) < 0.02
    assert abs(W.std() - 1) < 0.02


def test_features_bounded_by_activation():
    rng = np.random.default_rng(0)
    D = np.hstack([np.ones((50, 1)), 100 * rng.standard_normal((50, 4))])
    W = generate_bank((4, 0, 0), 30, 1, seed=0).weights[0]
    H = featurize(D, W)
    assert np.all(np.abs(H) <= 1)
    L = featurize(D, W, "logistic")
    assert np.all((L >= 0) & (L <= 1))


def test_featurize_rejects_dimension_mismatch():
    W = generate_bank((2, 0, 0), 5, 1, seed=0).weights[0]
    with pytest.raises(ValueError, match="weights expect 3 columns"):
        featurize(np.ones((4, 4)), W)


def test_unknown_activation():
    with pytest.raises(ValueError, match="unknown activation"):
        generate_bank((1, 0, 1), 5, 1, seed=0, activation="relu6")


def test_feature_matrix_full_rank_monte_carlo():
    # N < T random tanh features of continuous inputs are full column rank almost surely
    rng = np.random.default_rng(12)
    for trial in range(200):
        T, N = int(rng.integers(15, 60)), int(rng.integers(2, 14))
        D = np.hstack([np.ones((T, 1)), rng.standard_normal((T, 5))])
        H = featurize(D, generate_bank((5, 0, 0), N, 1, seed=trial).weights[0])
        assert np.linalg.matrix_rank(H) == N


def test_bank_json_roundtrip(tmp_path):
    bank = generate_bank((3, 1, 2), 7, 3, seed=9)
    bank.save(tmp_path / "bank.json")
    back = FeaturizerBank.load(tmp_path / "bank.json")
    assert back.dims == bank.dims and back.seed == bank.seed
    assert all(np.array_equal(x, y) for x, y in zip(back.weights, bank.weights))


def test_bank_weights_read_only():
    W = generate_bank((1, 0, 1), 4, 1, seed=0).weights[0]
    with pytest.raises(ValueError):
        W[0, 0] = 1.0


def test_transformer_sklearn_contract():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((80, 3))
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(80)
    tr = RandomFeatureTransformer(n_features=40, random_state=2)
    assert tr.get_params() == {"n_features": 40, "activation": "tanh", "random_state": 2}
    H = tr.fit_transform(X)
    assert H.shape == (80, 40)
    assert np.array_equal(clone(tr).fit(X).transform(X), H)
    model = make_pipeline(RandomFeatureTransformer(30, random_state=0), LinearRegression(fit_intercept=False))
    assert model.fit(X, y).score(X, y) > 0.8


def test_transformer_requires_fit_and_matching_width():
    tr = RandomFeatureTransformer(5, random_state=0)
    with pytest.raises(Exception):
        tr.transform(np.ones((3, 2)))
    tr.fit(np.random.default_rng(0).standard_normal((10, 2)))
    with pytest.raises(ValueError, match="expected 2"):
        tr.transform(np.ones((3, 3)))
