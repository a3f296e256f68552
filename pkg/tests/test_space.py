import numpy as np
import pytest
from hypothesis import given, strategies as st

from treetune.space import (BOOLEAN, CATEGORICAL, INTEGER, REAL, Configuration, ParamSpace, ParamSpec, SpaceError,
                            builtin_space, configurations, decode, encode, sample, validate)

LEARNERS = ["j48", "cart", "ctree"]


def test_cart_defaults():
    d = builtin_space("cart", 10).default()
    assert (d["cp"], d["minsplit"], d["minbucket"], d["maxdepth"]) == (0.01, 20, 7, 30)


def test_j48_defaults():
    d = builtin_space("j48", 10).default()
    assert d["C"] == 0.25 and d["M"] == 2
    assert all(d[b] is False for b in "ROBSAJ")
    assert "N" not in d


def test_ctree_mtry_collapses_for_one_feature():
    spec = builtin_space("ctree", 1)["mtry"]
    assert (spec.low, spec.high) == (1, 1)


def test_ctree_mtry_bounds_rounded():
    spec = builtin_space("ctree", 100)["mtry"]
    assert (spec.low, spec.high) == (round(100 ** 0.1), round(100 ** 0.9))


def test_unknown_learner():
    with pytest.raises(SpaceError):
        builtin_space("c50", 3)


def test_j48_activation(rng):
    space = builtin_space("j48", 5)
    seen = set()
    for _ in range(500):
        c = sample(space, rng)
        assert ("C" in c) != ("N" in c)
        assert ("N" in c) == c["R"]
        seen.add(c["R"])
        if c["R"]:
            assert 2 <= c["N"] <= 10
    assert seen == {False, True}


def test_cart_minsplit_mean():
    space = builtin_space("cart", 4)
    r = np.random.default_rng(7)
    m = np.mean([sample(space, r)["minsplit"] for _ in range(10000)])
    assert 23.5 <= m <= 27.5


@pytest.mark.parametrize("learner", LEARNERS)
def test_samples_validate(learner):
    space = builtin_space(learner, 12)
    r = np.random.default_rng(1)
    for _ in range(10000):
        assert validate(space, sample(space, r)) == []


def test_validate_messages():
    cart = builtin_space("cart", 3)
    bad = dict(cart.default())
    bad["cp"] = 0.5
    assert validate(cart, bad) == ["cp out of (0.0001,0.1)"]
    j48 = builtin_space("j48", 3)
    cfg = dict(j48.default())
    cfg["N"] = 3
    assert validate(j48, cfg) == ["N inactive"]
    cfg = dict(j48.default())
    del cfg["M"]
    cfg["zzz"] = 1
    assert set(validate(j48, cfg)) == {"M missing", "zzz unknown"}
    cfg = dict(cart.default())
    cfg["usesurrogate"] = 5
    assert validate(cart, cfg) == ["usesurrogate not in {0,1,2}"]
    cfg = dict(cart.default())
    cfg["minsplit"] = 0
    assert validate(cart, cfg) == ["minsplit out of [1,50]"]


@pytest.mark.parametrize("learner", LEARNERS)
def test_defaults_validate(learner):
    space = builtin_space(learner, 8)
    assert validate(space, space.default()) == []


def test_open_interval_endpoints_rejected():
    cart = builtin_space("cart", 3)
    for v in (0.0001, 0.1):
        assert validate(cart, cart.default().replace(cp=v)) == ["cp out of (0.0001,0.1)"]
    assert validate(cart, cart.default().replace(cp=0.0002)) == []


def test_encoding_endpoints():
    cart = builtin_space("cart", 3)
    idx = cart.index("maxdepth")
    assert encode(cart, cart.default().replace(maxdepth=1))[idx] == 0.0
    assert encode(cart, cart.default().replace(maxdepth=30))[idx] == 1.0


def test_boolean_bins():
    space = ParamSpace("b", (ParamSpec("flag", BOOLEAN, default=False),))
    assert decode(space, [0.49])["flag"] is False
    assert decode(space, [0.51])["flag"] is True
    assert decode(space, [0.5])["flag"] is False  # edge goes to the lower bin
    assert decode(space, [-3.0])["flag"] is False and decode(space, [7.0])["flag"] is True


def test_decode_wrong_length():
    with pytest.raises(SpaceError):
        decode(builtin_space("cart", 3), [0.5] * 3)


@pytest.mark.parametrize("learner", LEARNERS)
def test_round_trip(learner):
    space = builtin_space(learner, 20)
    r = np.random.default_rng(3)
    for _ in range(1000):
        c = sample(space, r)
        assert decode(space, encode(space, c)) == c


@given(st.lists(st.floats(-0.5, 1.5, allow_nan=False), min_size=6, max_size=6))
def test_decode_always_valid(vec):
    for learner in LEARNERS:
        space = builtin_space(learner, 9)
        v = (vec * 2)[:len(space)]
        assert validate(space, decode(space, v)) == []


def test_ctree_default_mtry_not_encodable():
    # the sentinel 0 lies below the range; it encodes at the lower end
    space = builtin_space("ctree", 50)
    d = space.default()
    assert decode(space, encode(space, d))["mtry"] == space["mtry"].low


def test_json_round_trip():
    for learner in LEARNERS:
        space = builtin_space(learner, 7)
        again = ParamSpace.from_json(space.to_json())
        assert again.names == space.names
        assert again.default() == space.default()
        c = sample(space, np.random.default_rng(0))
        assert again.config_from_json(c.to_dict()) == c


def test_configuration_is_hashable_mapping():
    a = Configuration({"x": 1, "y": True})
    b = Configuration([("y", True), ("x", 1)])
    assert a == b and hash(a) == hash(b)
    assert a.replace(x=2)["x"] == 2 and a["x"] == 1
    with pytest.raises(AttributeError):
        a.x = 3


def test_spec_invariants():
    with pytest.raises(SpaceError):
        ParamSpec("r", REAL, 1.0, 1.0, default=1.0)
    with pytest.raises(SpaceError):
        ParamSpec("i", INTEGER, 1, 5, default=9)
    with pytest.raises(SpaceError):
        ParamSpec("c", CATEGORICAL, levels=("a", "a"), default="a")
    with pytest.raises(SpaceError):
        ParamSpace("s", (ParamSpec("a", BOOLEAN, default=False, condition=("b", True)),
                         ParamSpec("b", BOOLEAN, default=False)))


def test_enumeration():
    space = ParamSpace("e", (ParamSpec("a", BOOLEAN, default=False), ParamSpec("n", INTEGER, 1, 4, default=1),
                             ParamSpec("m", INTEGER, 1, 2, default=1, condition=("a", True))))
    configs = configurations(space)
    assert len(configs) == 4 + 8
    assert all(validate(space, c) == [] for c in configs)
    with pytest.raises(SpaceError):
        configurations(builtin_space("cart", 3))
