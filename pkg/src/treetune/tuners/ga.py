"""Real-coded genetic algorithm on the encoded unit hypercube."""

from __future__ import annotations

import math

import numpy as np

from .base import POPULATION, Tuner

SCALING_FACTOR = 2.0


def linear_scaling_probabilities(fitness: np.ndarray, factor: float = SCALING_FACTOR) -> np.ndarray:
    """Roulette probabilities after linear fitness scaling.

    The scaled best gets ``factor`` times the scaled mean whenever that keeps
    every scaled value nonnegative; otherwise the worst is mapped to zero.
    """
    f = np.asarray(fitness, dtype=float)
    fmin, fmax, fave = f.min(), f.max(), f.mean()
    if fmax - fmin <= 1e-12 * max(1.0, abs(fmax)):
        return np.full(len(f), 1.0 / len(f))
    if fmin > (factor * fave - fmax) / (factor - 1):
        delta = fmax - fave
        a = (factor - 1) * fave / delta
        b = fave * (fmax - factor * fave) / delta
    else:
        delta = fave - fmin
        a = fave / delta
        b = -fmin * fave / delta
    scaled = np.abs(a * f + b)
    total = scaled.sum()
    if not np.isfinite(total) or total <= 0:
        # negative or zero mean fitness: fall back to rank-free shift
        scaled = f - fmin
        total = scaled.sum()
    return scaled / total


def ga_generation(population: np.ndarray, fitness: np.ndarray, rng: np.random.Generator,
                  pcrossover: float = 0.8, pmutation: float = 0.05) -> np.ndarray:
    """Offspring of one generation: roulette selection, local arithmetic crossover, random reset."""
    n, k = population.shape
    probs = linear_scaling_probabilities(fitness)
    parents = population[rng.choice(n, size=n, replace=True, p=probs)].copy()
    for i in range(0, n - 1, 2):
        if rng.random() < pcrossover:
            lam = rng.random(k)
            a, b = parents[i].copy(), parents[i + 1].copy()
            parents[i] = lam * a + (1 - lam) * b
            parents[i + 1] = lam * b + (1 - lam) * a
    if pmutation > 0:
        mask = rng.random((n, k)) < pmutation
        parents[mask] = rng.random(int(mask.sum()))
    return np.clip(parents, 0.0, 1.0)


class GeneticAlgorithm(Tuner):
    """Population of 10; each generation replaces its worst offspring with the previous best."""

    tag = "ga"

    def __init__(self, space, budget, rng, pcrossover=0.8, pmutation=0.05, elitism=0.05, **kw):
        super().__init__(space, budget, rng, **kw)
        self.pcrossover, self.pmutation = pcrossover, pmutation
        self.n_elite = max(1, math.ceil(elitism * POPULATION))
        self.pop = None
        self.fit = None

    def ask(self, max_n):
        k = len(self.space)
        if self.pop is None:
            vecs = self.rng.random((POPULATION, k))
        else:
            vecs = ga_generation(self.pop, self.fit, self.rng, self.pcrossover, self.pmutation)
        return [self.propose_vector(v) for v in vecs[:max_n]]

    def tell(self, proposals, values):
        vecs = np.array([p.vector for p in proposals])
        vals = np.asarray(values, dtype=float)
        if self.pop is not None:
            elite = np.argsort(-self.fit, kind="stable")[: self.n_elite]
            worst = np.argsort(vals, kind="stable")[: self.n_elite]
            vecs = vecs.copy()
            vals = vals.copy()
            for e, w in zip(elite, worst):
                if self.fit[e] > vals[w]:
                    vecs[w], vals[w] = self.pop[e], self.fit[e]
        self.pop, self.fit = vecs, vals
