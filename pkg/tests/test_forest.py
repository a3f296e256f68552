import numpy as np
import pytest

from treetune.forest import RandomForest


def _data(n=200, seed=0):
    r = np.random.default_rng(seed)
    X = r.random((n, 3))
    y = np.where(X[:, 0] < 0.5, 1.0, 3.0) + 0.01 * r.standard_normal(n)
    return X, y


def test_learns_step():
    X, y = _data()
    rf = RandomForest(50).fit(X, y, np.random.default_rng(1))
    Xt, yt = _data(500, seed=7)
    mu, sd = rf.predict(Xt)
    far = np.abs(Xt[:, 0] - 0.5) > 0.1
    assert np.sqrt(np.mean((mu[far] - yt[far]) ** 2)) < 0.3
    assert (sd >= 0).all()


def test_predictions_within_observed_range():
    X, y = _data(seed=3)
    rf = RandomForest(30).fit(X, y, np.random.default_rng(0))
    p = rf.predict_all(np.random.default_rng(9).random((100, 3)))
    assert p.shape == (30, 100)
    assert p.min() >= y.min() - 1e-12 and p.max() <= y.max() + 1e-12


def test_leaf_weight_at_least_min_leaf():
    X, y = _data()
    rf = RandomForest(20, min_leaf=5).fit(X, y, np.random.default_rng(2))
    for t in rf.trees:
        assert (t.weight[t.is_leaf] >= 5).all()
        assert t.predict(X).shape == (len(y),)


def test_deterministic():
    X, y = _data()
    a = RandomForest(10).fit(X, y, np.random.default_rng(4)).predict_all(X)
    b = RandomForest(10).fit(X, y, np.random.default_rng(4)).predict_all(X)
    assert np.array_equal(a, b)


def test_constant_target_has_zero_spread():
    X, _ = _data()
    rf = RandomForest(10).fit(X, np.full(len(X), 0.5), np.random.default_rng(0))
    mu, sd = rf.predict(X[:5])
    assert np.allclose(mu, 0.5) and np.allclose(sd, 0.0)


def test_too_few_points():
    with pytest.raises(ValueError):
        RandomForest(5, min_leaf=5).fit(np.zeros((3, 1)), np.zeros(3), np.random.default_rng(0))
