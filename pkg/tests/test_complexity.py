import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from treetune.complexity import (ComplexityError, ComplexityProfile, advise, f1, f3, f4, l2,
                                 minimum_spanning_tree, n1, n2, n4, normalize, profile)
from treetune.data import Dataset, balance_scale


def line(labels):
    X = np.arange(len(labels), dtype=float)[:, None]
    return X, np.array(labels)


def test_f1_zero_for_identical_means():
    X = np.array([[0.0], [2.0], [0.0], [2.0]])
    assert f1((X, np.array([0, 0, 1, 1]))) == 0.0


def test_f1_closed_form():
    X = np.array([[-1.0], [1.0], [9.0], [11.0]])
    assert f1((X, np.array([0, 0, 1, 1]))) == pytest.approx(25.0)


def test_f1_infinite_is_flagged():
    X = np.array([[0.0], [0.0], [5.0], [5.0]])
    prof = profile((X, np.array([0, 0, 1, 1])))
    assert np.isinf(prof.f1) and any("f1" in f for f in prof.flags)


def test_f3_extremes():
    y = np.array([0, 0, 1, 1])
    assert f3((np.array([[0.0], [3.0], [0.0], [3.0]]), y)) == 0.0
    assert f3((np.array([[0.0], [1.0], [5.0], [6.0]]), y)) == 1.0


def test_f4_two_half_separating_features():
    # f1 separates points 0,1 (A) and 2,3 (B); f2 separates 4,5 (A) and 6,7 (B)
    X = np.array([[0, 6], [1, 6], [8, 3], [9, 3], [6, 0], [6, 1], [3, 8], [3, 9]], dtype=float)
    y = np.array([0, 0, 1, 1, 0, 0, 1, 1])
    assert f3((X, y)) == pytest.approx(0.5)
    assert f4((X, y)) == pytest.approx(1.0)


def test_n1_line_examples():
    assert n1(line([0, 0, 1, 1])) == pytest.approx(0.5)
    assert n1(line([0, 1] * 4)) == pytest.approx(1.0)


def test_mst_is_path_on_a_line():
    assert minimum_spanning_tree(line([0, 0, 1, 1])) == [(0, 1), (1, 2), (2, 3)]


def test_mst_ties_lowest_index():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    edges = minimum_spanning_tree((X, np.array([0, 1, 0, 1])))
    assert edges[0] == (0, 1)


def test_n2_brute_force_oracle():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.2]])
    y = np.array([0, 0, 0, 1, 1, 1])
    Z = normalize(X, np.zeros(2, dtype=bool))
    D = cdist(Z, Z)
    np.fill_diagonal(D, np.inf)
    intra = sum(D[i, y == y[i]].min() for i in range(6))
    inter = sum(D[i, y != y[i]].min() for i in range(6))
    assert n2((X, y)) == pytest.approx(intra / inter)
    assert n2((X, y)) < 0.05


def test_n2_singleton_flag():
    X = np.array([[0.0], [0.1], [1.0]])
    prof = profile((X, np.array([0, 0, 1])))
    assert any("singleton" in f for f in prof.flags)
    assert np.isfinite(prof.n2)


def test_l2_separable():
    X = np.array([[0.0], [0.1], [0.2], [0.8], [0.9], [1.0]])
    assert l2((X, np.array([0, 0, 0, 1, 1, 1]))) == 0.0


def test_n4_deterministic_and_separable():
    r = np.random.default_rng(0)
    X = np.vstack([r.random((20, 2)), r.random((20, 2)) + 5])
    y = np.repeat([0, 1], 20)
    assert n4((X, y)) == 0.0
    noisy = (r.random((60, 2)), r.integers(0, 2, 60))
    assert n4(noisy) == n4(noisy)


def test_categorical_distance_counts_mismatch():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    cat = np.array([True, True])
    prof = profile((X, np.array([0, 0, 1, 1]), cat))
    assert np.isnan(prof.f1) and 0 <= prof.n1 <= 1 and prof.l2 == 0.0


def _random_data(seed, n=40, d=3, c=3):
    r = np.random.default_rng(seed)
    X = r.random((n, d)) * r.uniform(0.1, 10, d)
    y = np.arange(n) % c
    r.shuffle(y)
    return X, y


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_bounded_measures(seed):
    p = profile(_random_data(seed))
    for v in (p.n1, p.f3, p.f4, p.n4, p.l2):
        assert 0.0 <= v <= 1.0
    assert p.f1 >= 0 and p.n2 >= 0 and p.cls == 3


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_reorder_and_rescale_invariance(seed):
    X, y = _random_data(seed)
    perm = np.random.default_rng(seed + 1).permutation(len(y))
    scale = np.array([3.0, 0.01, 250.0])
    shift = np.array([-4.0, 7.0, 0.5])
    for fn in (f1, f3, f4, n1, n2):
        base = fn((X, y))
        assert fn((X[perm], y[perm])) == pytest.approx(base, rel=1e-9)
        assert fn((X * scale + shift, y)) == pytest.approx(base, rel=1e-9)
    assert l2((X[perm], y[perm])) == pytest.approx(l2((X, y)))


def test_errors():
    with pytest.raises(ComplexityError):
        f1((np.zeros((3, 1)), np.zeros(3)))
    with pytest.raises(ComplexityError):
        f3((np.zeros((4, 1)), np.array([0, 0, 1, 1]), np.array([True])))


def _profile(**kw):
    base = dict(f1=1.0, f3=0.5, f4=0.5, n1=0.1, n2=0.3, n4=0.1, l2=0.5, cls=2)
    base.update(kw)
    return ComplexityProfile(**base)


def test_advice_examples():
    assert advise(_profile(cls=10), "j48").verdict == "tune"
    assert advise(_profile(f4=0.9), "j48").verdict == "defaults"
    assert advise(_profile(f1=0.05), "j48").rules == ("f1 < 0.06",)
    assert advise(_profile(n1=0.3, f3=0.02, n4=0.1), "cart").verdict == "defaults"
    assert advise(_profile(n1=0.2), "cart").verdict == "tune"
    assert advise(_profile(n2=0.6), "ctree").verdict == "tune"
    assert advise(_profile(l2=0.1), "ctree").verdict == "tune"
    assert advise(_profile(), "ctree").verdict == "defaults"


def test_conflicting_rules_tune_and_list_all():
    a = advise(_profile(cls=10, f4=0.9), "j48")
    assert a.verdict == "tune"
    assert set(a.rules) == {"cls > 8", "f4 > 0.8695"}


def test_advise_is_pure():
    p = _profile(n1=0.25)
    assert advise(p, "j48") == advise(p, "j48")
    with pytest.raises(ComplexityError):
        advise(p, "c50")


def test_profile_on_dataset():
    p = profile(balance_scale())
    assert p.cls == 3
    assert set(p.to_dict()) == {"f1", "f3", "f4", "n1", "n2", "n4", "l2", "cls", "flags"}
