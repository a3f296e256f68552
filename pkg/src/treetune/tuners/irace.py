"""Iterated racing over a pool of evaluation instances.

Each iteration samples candidates around the current elites, races them
instance by instance and drops those a Friedman test (with Conover-style
pairwise comparison to the best) finds significantly worse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..space import BOOLEAN, CATEGORICAL, INTEGER, REAL, REAL_MARGIN, Configuration, sample
from .base import OptimizationPath, Proposal, Tuner

ALPHA = 0.05
FIRST_TEST = 100
EACH_TEST = 1
MAX_RESAMPLE = 100
# per-candidate instance count used to size each iteration's candidate set
SIZING_INSTANCES = 5


def friedman_survivors(results: np.ndarray, alpha: float = ALPHA) -> np.ndarray:
    """Indices of candidates not significantly worse than the best.

    Parameters
    ----------
    results : (n_instances, n_candidates) array
        Fitness values; larger is better.
    """
    n, k = results.shape
    if k < 2 or n < 2:
        return np.arange(k)
    ranks = np.vstack([stats.rankdata(-row) for row in results])
    R = ranks.sum(axis=0)
    A = float(np.sum(ranks ** 2))
    C = n * k * (k + 1) ** 2 / 4.0
    if A == C:
        return np.arange(k)
    T1 = (k - 1) * (np.sum(R ** 2) - n * C) / (A - C)
    if not stats.chi2.sf(T1, k - 1) < alpha:
        return np.arange(k)
    df = (n - 1) * (k - 1)
    t = stats.t.ppf(1 - alpha / 2, df) * math.sqrt(2 * (n * A - np.sum(R ** 2)) / df)
    best = int(np.argmin(R))
    return np.flatnonzero(np.abs(R - R[best]) <= t)


@dataclass
class _Candidate:
    config: Configuration
    probs: dict = field(default_factory=dict)  # categorical name -> probability vector
    results: dict = field(default_factory=dict)  # instance -> fitness


class IteratedRacing(Tuner):
    """Racing-based configurator working in native parameter space.

    Options
    -------
    n_instances : int
        Size of the instance pool (instance ids ``0 .. n-1``).
    first_test : int
        Instance-evaluations the race accumulates before the first test.
    each_test : int
        Instances between later tests.
    """

    tag = "irace"

    def __init__(self, space, budget, rng, n_instances: int = 100, first_test: int = FIRST_TEST,
                 each_test: int = EACH_TEST, alpha: float = ALPHA, **kw):
        super().__init__(space, budget, rng, **kw)
        self.n_instances = int(n_instances)
        self.first_test = first_test
        self.each_test = each_test
        self.alpha = alpha
        self.instances = [int(i) for i in rng.permutation(self.n_instances)]
        k = len(space)
        self.n_iterations = 2 + int(round(math.log2(k))) if k > 0 else 2
        self.elites: list[_Candidate] = []
        self.iteration_log: list[dict] = []
        self._gen = self._run()
        self._started = False
        self._values = None

    # -- driver glue --------------------------------------------------------
    def ask(self, max_n):
        try:
            if self._started:
                batch = self._gen.send(self._values)
            else:
                self._started = True
                batch = next(self._gen)
        except StopIteration:
            return []
        return batch

    def tell(self, proposals, values):
        self._values = list(values)

    def incumbent(self, path: OptimizationPath) -> Configuration:
        if self.elites:
            return self.elites[0].config
        return path.best().config

    # -- racing -------------------------------------------------------------
    def _run(self):
        j = 0
        while self.budget.remaining > 0:
            j += 1
            n_left = max(1, self.n_iterations - j + 1)
            iter_budget = self.budget.remaining // n_left if j <= self.n_iterations else self.budget.remaining
            if iter_budget <= 0:
                iter_budget = self.budget.remaining
            n_cand = max(len(self.elites) + 1, iter_budget // (SIZING_INSTANCES + min(5, j)))
            # elites already hold results on the first instance
            n_cand = min(n_cand, len(self.elites) + iter_budget)
            candidates = list(self.elites) + self._sample_new(n_cand - len(self.elites), j)
            used = yield from self._race(candidates, iter_budget)
            self.iteration_log.append({"iteration": j, "candidates": len(candidates),
                                       "evaluations": used, "elites": len(self.elites)})
            if used == 0:
                break
            self._update_probabilities(j)

    def _race(self, candidates, iter_budget):
        """Race ``candidates`` over the instance sequence; returns evaluations spent.

        The first elimination test happens once the race has accumulated
        ``first_test`` instance-evaluations over its alive candidates, then
        after every ``each_test`` further instances.
        """
        alive = list(range(len(candidates)))
        used = 0
        seen = 0
        batch_evals = 0
        since_test = None
        for pos, inst in enumerate(self.instances):
            todo = [c for c in alive if inst not in candidates[c].results]
            if used + len(todo) > iter_budget or len(todo) > self.budget.remaining:
                break
            if todo:
                batch = [Proposal(candidates[c].config, inst) for c in todo]
                values = yield batch
                for c, v in zip(todo, values):
                    candidates[c].results[inst] = float(v)
                used += len(todo)
            seen = pos + 1
            batch_evals += len(alive)
            if since_test is not None:
                since_test += 1
            if (since_test is None and batch_evals >= self.first_test) or (
                    since_test is not None and since_test >= self.each_test):
                since_test = 0
                block = np.array([[candidates[c].results[i] for c in alive] for i in self.instances[:seen]])
                keep = friedman_survivors(block, self.alpha)
                alive = [alive[i] for i in keep]
            if len(alive) <= self.n_iterations:
                break
        # rank survivors on the instances they all share
        if seen > 0:
            block = np.array([[candidates[c].results[i] for c in alive] for i in self.instances[:seen]])
            ranks = np.vstack([stats.rankdata(-row) for row in block]).sum(axis=0)
            means = block.mean(axis=0)
            order = sorted(range(len(alive)), key=lambda i: (ranks[i], -means[i], i))
            alive = [alive[i] for i in order]
        self.elites = [candidates[c] for c in alive[:self.n_iterations]]
        return used

    # -- sampling -----------------------------------------------------------
    def _sample_new(self, n, j) -> list[_Candidate]:
        out: list[_Candidate] = []
        taken = {e.config for e in self.elites}
        for _ in range(max(0, n)):
            cand = None
            for _ in range(MAX_RESAMPLE):
                cand = self._sample_one(j, n)
                if cand.config not in taken:
                    break
            taken.add(cand.config)
            out.append(cand)
        return out

    def _sample_one(self, j, n_new) -> _Candidate:
        if not self.elites:
            cfg = sample(self.space, self.rng)
            probs = {p.name: np.full(p.n_levels, 1.0 / p.n_levels)
                     for p in self.space.params if p.kind in (CATEGORICAL, BOOLEAN)}
            return _Candidate(cfg, probs)
        ne = len(self.elites)
        weights = np.array([(ne - r + 1) for r in range(1, ne + 1)], dtype=float)
        parent = self.elites[int(self.rng.choice(ne, p=weights / weights.sum()))]
        k = len(self.space)
        shrink = (1.0 / max(1, n_new)) ** (j / k)
        values = {}
        for p in self.space.params:
            if not self.space.is_active(p, values):
                continue
            if p.name not in parent.config:
                values[p.name] = p.sample(self.rng)
                continue
            v = parent.config[p.name]
            if p.kind in (CATEGORICAL, BOOLEAN):
                pr = parent.probs[p.name]
                values[p.name] = p.levels[int(self.rng.choice(p.n_levels, p=pr / pr.sum()))]
            elif p.kind == REAL:
                lo, hi = p.low + REAL_MARGIN, p.high - REAL_MARGIN
                values[p.name] = float(_truncnorm(self.rng, v, (p.high - p.low) * shrink, lo, hi))
            else:
                if v in p.special and not p.low <= v <= p.high:
                    v = p.default if p.low <= p.default <= p.high else p.low
                x = _truncnorm(self.rng, v + 0.5, (p.high + 1 - p.low) * shrink, p.low, p.high + 1)
                values[p.name] = int(min(p.high, math.floor(x)))
        return _Candidate(Configuration(values), {k_: v.copy() for k_, v in parent.probs.items()})

    def _update_probabilities(self, j):
        step = (j - 1) / self.n_iterations if self.n_iterations else 0.0
        for e in self.elites:
            for name, pr in e.probs.items():
                if name in e.config:
                    spec = self.space[name]
                    pr *= (1.0 - step)
                    pr[spec.levels.index(spec.canonical(e.config[name]))] += step


def _truncnorm(rng, mean, sd, lo, hi) -> float:
    if sd <= 0:
        return min(hi, max(lo, mean))
    # rejection is exact and cheap unless the window sits far in a tail
    for _ in range(32):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return float(x)
    a, b = (lo - mean) / sd, (hi - mean) / sd
    return float(stats.truncnorm.rvs(a, b, loc=mean, scale=sd, random_state=rng))
