"""Gaussian-copula estimation of distribution algorithm with truncated-normal margins."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .base import POPULATION, Tuner

N_SELECTED = 5


def normal_scores(sel: np.ndarray) -> np.ndarray:
    """Column-wise rank normal scores ``Phi^-1(rank / (n + 1))``."""
    n = sel.shape[0]
    ranks = np.column_stack([stats.rankdata(sel[:, j]) for j in range(sel.shape[1])])
    return stats.norm.ppf(ranks / (n + 1))


def copula_correlation(sel: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Correlation of the normal scores over the non-degenerate coordinates."""
    m = int(active.sum())
    if m <= 1:
        return np.eye(m)
    z = normal_scores(sel[:, active])
    r = np.corrcoef(z, rowvar=False)
    r = np.where(np.isfinite(r), r, 0.0)
    np.fill_diagonal(r, 1.0)
    return r


def sample_copula(corr: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform marginals coupled through a Gaussian copula (eigen-decomposition sampler)."""
    m = corr.shape[0]
    if m == 0:
        return np.empty((n, 0))
    vals, vecs = np.linalg.eigh(corr)
    a = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = rng.standard_normal((n, m)) @ a.T
    return stats.norm.cdf(z)


def eda_generation(population: np.ndarray, fitness: np.ndarray, n_offspring: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Offspring sampled from the copula model fitted to the best half."""
    order = np.argsort(-np.asarray(fitness), kind="stable")
    sel = population[order[:N_SELECTED]]
    mu = sel.mean(axis=0)
    sd = sel.std(axis=0, ddof=1)
    active = sd > 1e-12
    u = sample_copula(copula_correlation(sel, active), n_offspring, rng)
    out = np.tile(mu, (n_offspring, 1))
    out[:, ~active] = sel[0, ~active]  # point mass keeps the exact value
    if active.any():
        m, s = mu[active], sd[active]
        a, b = (0.0 - m) / s, (1.0 - m) / s
        u = np.clip(u, 1e-12, 1 - 1e-12)
        out[:, active] = stats.truncnorm.ppf(u, a, b, loc=m, scale=s)
    return np.clip(out, 0.0, 1.0)


class CopulaEDA(Tuner):
    """Population of 10: nine sampled offspring plus the best individual so far."""

    tag = "eda"

    def __init__(self, space, budget, rng, **kw):
        super().__init__(space, budget, rng, **kw)
        self.pop = None
        self.fit = None

    def ask(self, max_n):
        k = len(self.space)
        if self.pop is None:
            vecs = self.rng.random((POPULATION, k))
        else:
            vecs = eda_generation(self.pop, self.fit, POPULATION - 1, self.rng)
        return [self.propose_vector(v) for v in vecs[:max_n]]

    def tell(self, proposals, values):
        vecs = np.array([p.vector for p in proposals])
        vals = np.asarray(values, dtype=float)
        if self.pop is not None:
            e = int(np.argmax(self.fit))
            vecs = np.vstack([vecs, self.pop[e]])
            vals = np.append(vals, self.fit[e])
        self.pop, self.fit = vecs, vals
