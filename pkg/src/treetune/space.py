"""Mixed hyperparameter spaces with one level of conditional activation.

A :class:`ParamSpace` is an ordered list of :class:`ParamSpec` records.
Configurations are immutable mappings holding only the active parameters.
Every space also has a canonical encoding into ``[0, 1]^k`` used by the
population-based tuners.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

REAL = "real"
INTEGER = "integer"
CATEGORICAL = "categorical"
BOOLEAN = "boolean"
KINDS = (REAL, INTEGER, CATEGORICAL, BOOLEAN)

# open real intervals are sampled and decoded on the interval shrunk by this
REAL_MARGIN = 1e-9


class SpaceError(ValueError):
    """Invalid space declaration or malformed configuration vector."""


def _fmt(x) -> str:
    return f"{x:g}" if isinstance(x, float) else str(x)


@dataclass(frozen=True)
class ParamSpec:
    """Declaration of one hyperparameter.

    Parameters
    ----------
    name : str
    kind : {'real', 'integer', 'categorical', 'boolean'}
    low, high : float or int, optional
        Range for real (open interval) and integer (closed interval) kinds.
    levels : tuple, optional
        Allowed values for categorical kinds. Booleans use ``(False, True)``.
    default : value
    condition : (str, value), optional
        The parameter is active only when the named parent equals the value.
    special : tuple
        Extra admissible values outside the range, e.g. a sentinel default.
    """

    name: str
    kind: str
    low: float | int | None = None
    high: float | int | None = None
    levels: tuple = ()
    default: Any = None
    condition: tuple[str, Any] | None = None
    special: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == BOOLEAN:
            object.__setattr__(self, "levels", (False, True))
        elif self.kind == CATEGORICAL:
            object.__setattr__(self, "levels", tuple(self.levels))
            if len(self.levels) < 1 or len(set(self.levels)) != len(self.levels):
                raise SpaceError(f"{self.name}: categorical levels must be distinct and nonempty")
        else:
            if self.low is None or self.high is None:
                raise SpaceError(f"{self.name}: range required")
            if self.kind == REAL and not self.low < self.high:
                raise SpaceError(f"{self.name}: empty range")
            if self.kind == INTEGER:
                object.__setattr__(self, "low", int(self.low))
                object.__setattr__(self, "high", int(self.high))
                if self.low > self.high:
                    raise SpaceError(f"{self.name}: empty range")
        if self.check(self.default) is not None:
            raise SpaceError(f"{self.name}: default {self.default!r} invalid")

    # -- value checks -------------------------------------------------------
    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def describe_range(self) -> str:
        if self.kind == REAL:
            return f"({_fmt(float(self.low))},{_fmt(float(self.high))})"
        if self.kind == INTEGER:
            return f"[{self.low},{self.high}]"
        return "{" + ",".join(str(v) for v in self.levels) + "}"

    def check(self, value) -> str | None:
        """Violation message for ``value``, or None when admissible."""
        if value in self.special and not isinstance(value, bool):
            return None
        if self.kind == REAL:
            ok = (isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool)
                  and self.low < value < self.high)
            return None if ok else f"{self.name} out of {self.describe_range()}"
        if self.kind == INTEGER:
            ok = (isinstance(value, (int, np.integer)) and not isinstance(value, bool)
                  and self.low <= value <= self.high)
            return None if ok else f"{self.name} out of {self.describe_range()}"
        if self.kind == BOOLEAN:
            ok = isinstance(value, (bool, np.bool_))
        else:
            ok = any(value == v and type(value) is type(v) for v in self.levels) or (
                value in self.levels and not isinstance(value, bool))
        return None if ok else f"{self.name} not in {self.describe_range()}"

    def canonical(self, value):
        """Convert numpy scalars to plain Python values."""
        if self.kind == REAL:
            return float(value)
        if self.kind == INTEGER:
            return int(value)
        if self.kind == BOOLEAN:
            return bool(value)
        for v in self.levels:
            if v == value:
                return v
        return value

    # -- sampling and encoding -------------------------------------------------
    def sample(self, rng: np.random.Generator):
        if self.kind == REAL:
            # through decode, so every sampled value has an exact encoding
            return self.decode(rng.random())
        if self.kind == INTEGER:
            return int(rng.integers(self.low, self.high + 1))
        return self.levels[int(rng.integers(self.n_levels))]

    def encode(self, value) -> float:
        if self.kind == REAL:
            x = float(value)
            u = min(1.0, max(0.0, (x - self.low) / (self.high - self.low)))
            # nudge by a few ulps so decoding returns x bit-for-bit
            up = down = u
            for _ in range(8):
                if self.decode(up) == x:
                    return up
                if self.decode(down) == x:
                    return down
                up, down = math.nextafter(up, 2.0), math.nextafter(down, -1.0)
            return u
        elif self.kind == INTEGER:
            if self.high == self.low:
                return 0.0
            u = (int(value) - self.low) / (self.high - self.low)
        else:
            u = (self.levels.index(self.canonical(value)) + 0.5) / self.n_levels
        return float(min(1.0, max(0.0, u)))

    def decode(self, u: float):
        u = min(1.0, max(0.0, float(u)))
        if self.kind == REAL:
            v = self.low + u * (self.high - self.low)
            return float(min(self.high - REAL_MARGIN, max(self.low + REAL_MARGIN, v)))
        if self.kind == INTEGER:
            v = math.floor(self.low + u * (self.high - self.low) + 0.5)
            return int(min(self.high, max(self.low, v)))
        i = math.ceil(u * self.n_levels) - 1
        return self.levels[min(self.n_levels - 1, max(0, i))]

    def to_record(self) -> dict:
        rec = {"name": self.name, "kind": self.kind, "default": self.default}
        if self.kind in (REAL, INTEGER):
            rec["range"] = [self.low, self.high]
        else:
            rec["levels"] = list(self.levels)
        rec["condition"] = list(self.condition) if self.condition else None
        if self.special:
            rec["special"] = list(self.special)
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "ParamSpec":
        lo, hi = rec.get("range", (None, None))
        cond = rec.get("condition")
        return cls(rec["name"], rec["kind"], lo, hi, tuple(rec.get("levels", ())), rec["default"],
                   tuple(cond) if cond else None, tuple(rec.get("special", ())))


class Configuration(Mapping):
    """Immutable, hashable assignment of values to the active parameters."""

    __slots__ = ("_items", "_hash")

    def __init__(self, values: Mapping | Sequence[tuple[str, Any]] = ()):
        items = dict(values)
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, key, value):
        raise AttributeError("Configuration is immutable")

    def __getitem__(self, key):
        return self._items[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(tuple(sorted(self._items.items(), key=lambda kv: kv[0]))))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, Mapping):
            return dict(self._items) == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        body = ", ".join(f"{k}={v!r}" for k, v in self._items.items())
        return f"Configuration({body})"

    def to_dict(self) -> dict:
        return dict(self._items)

    def replace(self, **changes) -> "Configuration":
        d = dict(self._items)
        d.update(changes)
        return Configuration(d)


@dataclass(frozen=True)
class ParamSpace:
    """Ordered collection of parameter declarations.

    Conditions may only reference earlier, unconditional parameters.
    """

    name: str
    params: tuple[ParamSpec, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        index = {}
        for i, p in enumerate(self.params):
            if p.name in index:
                raise SpaceError(f"duplicate parameter {p.name!r}")
            if p.condition is not None:
                parent, value = p.condition
                if parent not in index:
                    raise SpaceError(f"{p.name}: condition parent {parent!r} must precede it")
                pspec = self.params[index[parent]]
                if pspec.condition is not None:
                    raise SpaceError(f"{p.name}: nested conditions unsupported")
                if pspec.check(value) is not None:
                    raise SpaceError(f"{p.name}: condition value {value!r} invalid for {parent}")
            index[p.name] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def __getitem__(self, name: str) -> ParamSpec:
        return self.params[self._index[name]]

    def __contains__(self, name) -> bool:
        return name in self._index

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def index(self, name: str) -> int:
        return self._index[name]

    def is_active(self, spec: ParamSpec, values: Mapping) -> bool:
        if spec.condition is None:
            return True
        parent, required = spec.condition
        return parent in values and values[parent] == required

    def default(self) -> Configuration:
        values = {}
        for p in self.params:
            if self.is_active(p, values):
                values[p.name] = p.default
        return Configuration(values)

    def complete(self, config: Mapping) -> dict:
        """All parameters, with inactive ones set to their defaults."""
        return {p.name: config.get(p.name, p.default) for p in self.params}

    def to_records(self) -> list[dict]:
        return [p.to_record() for p in self.params]

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "params": self.to_records()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ParamSpace":
        doc = json.loads(text)
        return cls(doc["name"], tuple(ParamSpec.from_record(r) for r in doc["params"]))

    def config_from_json(self, doc: Mapping) -> Configuration:
        """Rebuild a configuration from JSON values (lists/levels restored)."""
        return Configuration({k: self[k].canonical(v) if k in self else v for k, v in doc.items()})


# ---------------------------------------------------------------------------
# Builtin spaces
# ---------------------------------------------------------------------------

LEARNERS = ("j48", "cart", "ctree")


def _mtry_bounds(p: int) -> tuple[int, int]:
    lo = min(max(int(round(p ** 0.1)), 1), p)
    hi = min(max(int(round(p ** 0.9)), 1), p)
    return lo, hi


def builtin_space(learner: str, feature_count: int) -> ParamSpace:
    """Hyperparameter space of a builtin learner for ``feature_count`` inputs."""
    if feature_count < 1:
        raise SpaceError("feature_count must be at least 1")
    if learner == "j48":
        params = (
            ParamSpec("R", BOOLEAN, default=False),
            ParamSpec("C", REAL, 0.001, 0.5, default=0.25, condition=("R", False)),
            ParamSpec("M", INTEGER, 1, 50, default=2),
            ParamSpec("N", INTEGER, 2, 10, default=3, condition=("R", True)),
            ParamSpec("O", BOOLEAN, default=False),
            ParamSpec("B", BOOLEAN, default=False),
            ParamSpec("S", BOOLEAN, default=False),
            ParamSpec("A", BOOLEAN, default=False),
            ParamSpec("J", BOOLEAN, default=False),
        )
    elif learner == "cart":
        params = (
            ParamSpec("cp", REAL, 0.0001, 0.1, default=0.01),
            ParamSpec("minsplit", INTEGER, 1, 50, default=20),
            ParamSpec("minbucket", INTEGER, 1, 50, default=7),
            ParamSpec("maxdepth", INTEGER, 1, 30, default=30),
            ParamSpec("usesurrogate", CATEGORICAL, levels=(0, 1, 2), default=2),
            ParamSpec("surrogatestyle", CATEGORICAL, levels=(0, 1), default=0),
        )
    elif learner == "ctree":
        lo, hi = _mtry_bounds(feature_count)
        params = (
            ParamSpec("mincriterion", REAL, 0.9, 0.999, default=0.95),
            ParamSpec("minsplit", INTEGER, 1, 50, default=20),
            ParamSpec("minbucket", INTEGER, 1, 50, default=7),
            # 0 means every feature is a split candidate
            ParamSpec("mtry", INTEGER, lo, hi, default=0, special=(0,)),
            ParamSpec("maxdepth", INTEGER, 1, 30, default=30),
            ParamSpec("stump", BOOLEAN, default=False),
        )
    else:
        raise SpaceError(f"unknown learner tag {learner!r}")
    return ParamSpace(learner, params)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def sample(space: ParamSpace, rng: np.random.Generator) -> Configuration:
    """Uniform draw; conditional parameters are drawn only when active."""
    values = {}
    for p in space.params:
        if space.is_active(p, values):
            values[p.name] = p.sample(rng)
    return Configuration(values)


def validate(space: ParamSpace, config: Mapping) -> list[str]:
    """Every range, level and activation violation (empty list when valid)."""
    problems = []
    for key in config:
        if key not in space:
            problems.append(f"{key} unknown")
    for p in space.params:
        active = space.is_active(p, config)
        if p.name in config:
            if not active:
                problems.append(f"{p.name} inactive")
            else:
                msg = p.check(config[p.name])
                if msg:
                    problems.append(msg)
        elif active:
            problems.append(f"{p.name} missing")
    return problems


def encode(space: ParamSpace, config: Mapping) -> np.ndarray:
    """Map a configuration into ``[0, 1]^k``; inactive slots get the encoded default."""
    return np.array([p.encode(config[p.name] if p.name in config else p.default)
                     for p in space.params], dtype=float)


def decode(space: ParamSpace, vector) -> Configuration:
    """Inverse of :func:`encode`; coordinates are clipped to ``[0, 1]`` first."""
    vector = np.asarray(vector, dtype=float).ravel()
    if vector.shape[0] != len(space):
        raise SpaceError(f"vector has {vector.shape[0]} coordinates, space has {len(space)}")
    values = {}
    for p, u in zip(space.params, vector):
        if space.is_active(p, values):
            values[p.name] = p.decode(0.0 if np.isnan(u) else u)
    return Configuration(values)


def configurations(space: ParamSpace) -> list[Configuration]:
    """Enumerate a space made only of integer, categorical and boolean parameters."""
    out: list[dict] = [{}]
    for p in space.params:
        if p.kind == REAL:
            raise SpaceError("cannot enumerate a space with real parameters")
        choices = list(range(p.low, p.high + 1)) if p.kind == INTEGER else list(p.levels)
        nxt = []
        for partial in out:
            if space.is_active(p, partial):
                nxt.extend({**partial, p.name: c} for c in choices)
            else:
                nxt.append(partial)
        out = nxt
    return [Configuration(c) for c in out]
