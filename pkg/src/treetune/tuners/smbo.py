"""Sequential model-based optimization with a random-forest surrogate."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..forest import RandomForest
from ..space import decode
from .base import POPULATION, Proposal, Tuner, latin_hypercube

N_CANDIDATES = 1000
N_MUTATED = 10
MUTATION_SD = 0.1


def expected_improvement(mu, sigma, f_best) -> np.ndarray:
    """EI for maximization; zero wherever ``sigma`` is zero."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros_like(mu)
    pos = sigma > 0
    z = (mu[pos] - f_best) / sigma[pos]
    out[pos] = (mu[pos] - f_best) * stats.norm.cdf(z) + sigma[pos] * stats.norm.pdf(z)
    return np.maximum(out, 0.0)


class ModelBased(Tuner):
    """Latin hypercube design of 10 points, then one EI-maximizing proposal per step.

    Options
    -------
    n_trees : int
        Surrogate forest size (default 100).
    """

    tag = "smbo"

    def __init__(self, space, budget, rng, n_trees: int = 100, **kw):
        super().__init__(space, budget, rng, **kw)
        self.n_trees = n_trees
        self.X: list[np.ndarray] = []
        self.y: list[float] = []

    def ask(self, max_n):
        k = len(self.space)
        if not self.X:
            design = latin_hypercube(POPULATION, k, self.rng)[:max_n]
            return [self._canonical(v) for v in design]
        return [self._canonical(self._next_point())]

    def _canonical(self, v) -> Proposal:
        # store the re-encoded point so the surrogate sees what was evaluated
        cfg = decode(self.space, np.clip(v, 0.0, 1.0))
        return Proposal(cfg, None, self.canonical_vector(cfg))

    def _next_point(self) -> np.ndarray:
        k = len(self.space)
        X = np.array(self.X)
        y = np.array(self.y)
        if np.all(y == y[0]):
            return self.rng.random(k)
        forest = RandomForest(self.n_trees).fit(X, y, self.rng)
        top = np.argsort(-y, kind="stable")[:N_MUTATED]
        mutated = np.clip(X[top] + self.rng.normal(0.0, MUTATION_SD, size=(len(top), k)), 0.0, 1.0)
        cand = np.vstack([self.rng.random((N_CANDIDATES, k)), mutated])
        mu, sd = forest.predict(cand)
        ei = expected_improvement(mu, sd, y.max())
        return cand[int(np.argmax(ei))]

    def tell(self, proposals, values):
        for p, v in zip(proposals, values):
            self.X.append(p.vector)
            self.y.append(float(v))
