"""Uniform random sampling of the native parameter space."""

from ..space import sample
from .base import POPULATION, Proposal, Tuner


class RandomSearch(Tuner):
    """Memoryless uniform sampling; duplicates are allowed."""

    tag = "rs"

    def ask(self, max_n):
        return [Proposal(sample(self.space, self.rng)) for _ in range(min(max_n, POPULATION))]

    def tell(self, proposals, values):
        pass
