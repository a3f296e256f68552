"""Standard particle swarm (2007 constants) on the encoded unit hypercube."""

from __future__ import annotations

import math

import numpy as np

from .base import POPULATION, Tuner

INERTIA = 1.0 / (2.0 * math.log(2.0))
ACCELERATION = 0.5 + math.log(2.0)
INFORMANTS = 3


def random_links(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``links[m, s]`` is True when particle ``m`` informs particle ``s``; everyone informs itself."""
    links = np.eye(n, dtype=bool)
    targets = rng.integers(0, n, size=(n, k))
    for m in range(n):
        links[m, targets[m]] = True
    return links


def best_informants(links: np.ndarray, pbest_fit: np.ndarray) -> np.ndarray:
    n = len(pbest_fit)
    out = np.empty(n, dtype=np.int64)
    for s in range(n):
        informers = np.flatnonzero(links[:, s])
        out[s] = informers[int(np.argmax(pbest_fit[informers]))]
    return out


def pso_step(x, v, pbest, pbest_fit, links, rng, w=INERTIA, c=ACCELERATION):
    """New positions and velocities; walls at 0 and 1 stop the particle."""
    n, k = x.shape
    g = best_informants(links, pbest_fit)
    x_new = np.empty_like(x)
    v_new = np.empty_like(v)
    for s in range(n):
        vel = w * v[s] + c * rng.random(k) * (pbest[s] - x[s])
        if g[s] != s:
            vel = vel + c * rng.random(k) * (pbest[g[s]] - x[s])
        pos = x[s] + vel
        low, high = pos < 0.0, pos > 1.0
        pos[low], vel[low] = 0.0, 0.0
        pos[high], vel[high] = 1.0, 0.0
        x_new[s], v_new[s] = pos, vel
    return x_new, v_new


class ParticleSwarm(Tuner):
    tag = "pso"

    def __init__(self, space, budget, rng, **kw):
        super().__init__(space, budget, rng, **kw)
        self.x = self.v = self.pbest = self.pbest_fit = None
        self.links = None
        self.best_so_far = -np.inf

    def ask(self, max_n):
        k = len(self.space)
        if self.x is None:
            x = self.rng.random((POPULATION, k))
            self._init_v = (self.rng.random((POPULATION, k)) - x) / 2.0
            self._pending = x
        else:
            x, v = pso_step(self.x, self.v, self.pbest, self.pbest_fit, self.links, self.rng)
            self._pending, self._pending_v = x, v
        return [self.propose_vector(p) for p in self._pending[:max_n]]

    def tell(self, proposals, values):
        vals = np.asarray(values, dtype=float)
        n = len(vals)
        if self.x is None:
            self.x, self.v = self._pending, self._init_v
            self.pbest, self.pbest_fit = self.x.copy(), np.full(POPULATION, -np.inf)
            self.pbest_fit[:n] = vals
            self.links = random_links(POPULATION, INFORMANTS, self.rng)
            self.best_so_far = vals.max()
            return
        self.x, self.v = self._pending, self._pending_v
        improved = vals > self.pbest_fit[:n]
        idx = np.flatnonzero(improved)
        self.pbest[idx] = self.x[idx]
        self.pbest_fit[idx] = vals[idx]
        if not vals.max() > self.best_so_far:
            self.links = random_links(POPULATION, INFORMANTS, self.rng)
        self.best_so_far = max(self.best_so_far, vals.max())
