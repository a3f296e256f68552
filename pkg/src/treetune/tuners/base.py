"""Propose/observe contract shared by all tuning techniques."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from ..space import Configuration, ParamSpace, decode, encode

POPULATION = 10


class TunerError(ValueError):
    """A tuner cannot run with the requested settings."""


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class TunerBudget:
    max_evaluations: int
    consumed: int = 0

    @property
    def remaining(self) -> int:
        return self.max_evaluations - self.consumed

    def consume(self, n: int = 1) -> None:
        if self.consumed + n > self.max_evaluations:
            raise BudgetExceeded(f"{self.consumed + n} evaluations exceed the budget of {self.max_evaluations}")
        self.consumed += n


@dataclass(frozen=True)
class Proposal:
    """A requested fitness evaluation."""

    config: Configuration
    instance: int | None = None
    vector: np.ndarray | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Trial:
    index: int
    config: Configuration
    fitness: float
    wall_time: float
    timestamp: float = 0.0
    instance: int | None = None

    def to_record(self) -> dict:
        rec = {"index": self.index, "config": self.config.to_dict(), "fitness": self.fitness,
               "wall_ms": round(self.wall_time * 1e3, 3), "timestamp": round(self.timestamp, 6)}
        if self.instance is not None:
            rec["instance"] = self.instance
        return rec


class OptimizationPath:
    """Trials in evaluation order with the cumulative best fitness."""

    def __init__(self, trials: Iterable[Trial] = ()):
        self.trials: list[Trial] = []
        for t in trials:
            self.append(t)

    def append(self, trial: Trial) -> None:
        if trial.index != len(self.trials) + 1:
            raise ValueError("trial indices must be dense from 1")
        self.trials.append(trial)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __getitem__(self, i):
        return self.trials[i]

    @property
    def fitness(self) -> np.ndarray:
        return np.array([t.fitness for t in self.trials], dtype=float)

    @property
    def best_curve(self) -> np.ndarray:
        f = self.fitness
        return np.maximum.accumulate(f) if len(f) else f

    def best(self) -> Trial:
        """Highest fitness; the earliest such trial on ties."""
        if not self.trials:
            raise ValueError("empty path")
        return self.trials[int(np.argmax(self.fitness))]

    def to_records(self) -> list[dict]:
        return [t.to_record() for t in self.trials]

    @classmethod
    def from_records(cls, records: Sequence[dict], space: ParamSpace | None = None) -> "OptimizationPath":
        trials = []
        for r in records:
            cfg = space.config_from_json(r["config"]) if space is not None else Configuration(r["config"])
            trials.append(Trial(r["index"], cfg, float(r["fitness"]), r.get("wall_ms", 0.0) / 1e3,
                                r.get("timestamp", 0.0), r.get("instance")))
        return cls(trials)


class Tuner:
    """Base class: subclasses implement :meth:`ask` and :meth:`tell`.

    ``ask(max_n)`` returns up to ``max_n`` proposals (an empty list ends the
    run); ``tell`` receives the fitness values in proposal order.
    """

    tag = ""
    min_budget = POPULATION

    def __init__(self, space: ParamSpace, budget: TunerBudget, rng: np.random.Generator, **options):
        self.space = space
        self.budget = budget
        self.rng = rng
        self.options = options
        self.best_trial: Trial | None = None

    def ask(self, max_n: int) -> list[Proposal]:
        raise NotImplementedError

    def tell(self, proposals: list[Proposal], values: list[float]) -> None:
        raise NotImplementedError

    def incumbent(self, path: OptimizationPath) -> Configuration:
        return path.best().config

    # helpers for the vector-coded techniques
    def propose_vector(self, v: np.ndarray) -> Proposal:
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        return Proposal(decode(self.space, v), None, v)

    def canonical_vector(self, config: Configuration) -> np.ndarray:
        return encode(self.space, config)


class _Evaluate:
    """Picklable evaluation wrapper returning (value, seconds)."""

    def __init__(self, fitness, instance_fitness):
        self.fitness = fitness
        self.instance_fitness = instance_fitness

    def __call__(self, proposal: Proposal):
        t0 = time.perf_counter()
        try:
            if proposal.instance is None:
                v = self.fitness(proposal.config)
            else:
                v = self.instance_fitness(proposal.config, proposal.instance)
        except Exception as exc:
            raise FitnessError(proposal.config, repr(exc)) from exc
        return float(v), time.perf_counter() - t0


class FitnessError(RuntimeError):
    """A fitness evaluation failed; carries the configuration."""

    def __init__(self, config, cause):
        super().__init__(f"fitness failed for {dict(config)}: {cause}")
        self.config = config
        self.cause = cause

    def __reduce__(self):
        return (FitnessError, (self.config, self.cause))


def run_tuner(technique: str, space: ParamSpace, fitness: Callable[[Configuration], float] | None,
              budget: int = 900, seed: int = 0,
              instance_fitness: Callable[[Configuration, int], float] | None = None,
              n_instances: int = 100, map_fn: Callable = map, on_trial: Callable | None = None,
              **options) -> tuple[Configuration, OptimizationPath]:
    """Maximize ``fitness`` over ``space`` with at most ``budget`` evaluations.

    Parameters
    ----------
    technique : {'rs', 'ga', 'pso', 'eda', 'smbo', 'irace'}
    fitness : callable
        Configuration -> real.
    instance_fitness : callable, optional
        (Configuration, instance id) -> real, used by racing. Without it the
        racing technique sees a single instance backed by ``fitness``.
    map_fn : callable
        Evaluates a batch; results must come back in input order.
    on_trial : callable, optional
        Called with every recorded :class:`Trial`.

    Returns
    -------
    best : Configuration
    path : OptimizationPath
    """
    from . import TECHNIQUES

    try:
        cls = TECHNIQUES[technique]
    except KeyError:
        raise TunerError(f"unknown technique {technique!r}") from None
    if budget < cls.min_budget:
        raise TunerError(f"budget below initial population ({budget} < {cls.min_budget})")
    if fitness is None and instance_fitness is None:
        raise TunerError("a fitness function is required")
    if technique == "irace":
        if instance_fitness is None:
            instance_fitness = _SingleInstance(fitness)
            n_instances = 1
        options["n_instances"] = n_instances
    rng = np.random.default_rng(seed)
    tb = TunerBudget(budget)
    tuner = cls(space, tb, rng, **options)
    path = OptimizationPath()
    evaluate = _Evaluate(fitness, instance_fitness)
    t_start = time.perf_counter()
    while tb.remaining > 0:
        batch = tuner.ask(tb.remaining)
        if not batch:
            break
        tb.consume(len(batch))
        results = list(map_fn(evaluate, batch))
        values = []
        for p, (v, dt) in zip(batch, results):
            if not math.isfinite(v):
                raise FitnessError(p.config, f"non-finite fitness {v}")
            trial = Trial(len(path) + 1, p.config, v, dt, time.perf_counter() - t_start, p.instance)
            path.append(trial)
            if on_trial is not None:
                on_trial(trial)
            values.append(v)
        tuner.tell(batch, values)
    if not len(path):
        raise TunerError("tuner produced no trials")
    return tuner.incumbent(path), path


class _SingleInstance:
    def __init__(self, fitness):
        self.fitness = fitness

    def __call__(self, config, instance):
        return self.fitness(config)


def latin_hypercube(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random Latin hypercube sample of ``n`` points in ``[0, 1]^k``."""
    out = np.empty((n, k))
    for j in range(k):
        out[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return out
