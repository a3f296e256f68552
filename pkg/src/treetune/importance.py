"""Hyperparameter importance by functional ANOVA over random-forest partitions.

A regression forest is fitted on (encoded configuration, fitness) pairs.
Every tree cuts ``[0, 1]^k`` into axis-aligned cells with constant
prediction, so its marginal prediction over any parameter subset is a sum
over cells, and the variance of the tree splits exactly into per-subset
components.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .forest import RandomForest, RegressionTree
from .space import ParamSpace, encode

FILTER = 0.005


class ImportanceError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionTree:
    """Leaf cells of one regression tree over the unit hypercube.

    ``lower[l, j] <= x_j < upper[l, j]`` describes leaf ``l``; ``value[l]`` is
    its prediction.
    """

    lower: np.ndarray
    upper: np.ndarray
    value: np.ndarray
    split_points: tuple  # per dimension: sorted interior thresholds

    @property
    def n_dims(self) -> int:
        return self.lower.shape[1]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> np.ndarray:
        return np.prod(self.widths, axis=1)

    @property
    def mean(self) -> float:
        return float(np.sum(self.value * self.volume))

    @property
    def variance(self) -> float:
        return float(np.sum(self.volume * (self.value - self.mean) ** 2))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = _covers(self.lower[None], self.upper[None], X[:, None, :]).all(axis=2)
        return self.value[np.argmax(inside, axis=1)]

    @classmethod
    def from_tree(cls, tree: RegressionTree, n_dims: int) -> "PartitionTree":
        lower, upper, value = [], [], []
        splits = [set() for _ in range(n_dims)]
        stack = [(0, np.zeros(n_dims), np.ones(n_dims))]
        while stack:
            t, lo, hi = stack.pop()
            if tree.left[t] < 0:
                lower.append(lo)
                upper.append(hi)
                value.append(tree.value[t])
                continue
            f, thr = int(tree.feature[t]), float(tree.threshold[t])
            splits[f].add(thr)
            lhi = hi.copy()
            lhi[f] = min(hi[f], thr)
            rlo = lo.copy()
            rlo[f] = max(lo[f], thr)
            stack.append((int(tree.right[t]), rlo, hi))
            stack.append((int(tree.left[t]), lo, lhi))
        return cls(np.array(lower), np.array(upper), np.array(value),
                   tuple(tuple(sorted(s)) for s in splits))


def _covers(lo, hi, x):
    # the top cell is closed at 1
    return (lo <= x) & ((x < hi) | ((hi >= 1.0) & (x <= 1.0)))


def marginal_prediction(tree: PartitionTree, subset: Sequence[int], values: Sequence[float]) -> float:
    """Average prediction over the dimensions outside ``subset`` with ``subset`` fixed to ``values``."""
    subset = list(subset)
    if not subset:
        return tree.mean
    v = np.asarray(values, dtype=float)
    rest = [j for j in range(tree.n_dims) if j not in subset]
    ok = _covers(tree.lower[:, subset], tree.upper[:, subset], v[None, :]).all(axis=1)
    w = np.prod(tree.widths[:, rest], axis=1) if rest else np.ones(len(tree.value))
    return float(np.sum(tree.value[ok] * w[ok]))


def _intervals(tree: PartitionTree, j: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.array([0.0, *tree.split_points[j], 1.0])
    return (edges[:-1] + edges[1:]) / 2.0, np.diff(edges)


def _marginal_grid(tree: PartitionTree, subset: tuple[int, ...]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Marginal prediction on the cell grid of ``subset`` and the per-axis cell widths."""
    rest = [j for j in range(tree.n_dims) if j not in subset]
    w = np.prod(tree.widths[:, rest], axis=1) if rest else np.ones(len(tree.value))
    weight = tree.value * w
    covers, widths = [], []
    for j in subset:
        mids, wd = _intervals(tree, j)
        covers.append(_covers(tree.lower[:, j:j + 1], tree.upper[:, j:j + 1], mids[None, :]).astype(float))
        widths.append(wd)
    letters = "abcdefghij"[:len(subset)]
    expr = "l," + ",".join(f"l{c}" for c in letters) + "->" + letters
    grid = np.einsum(expr, weight, *covers)
    return grid, widths


def subset_variances(tree: PartitionTree, max_order: int = 2) -> dict[tuple[int, ...], float]:
    """Variance of each functional-ANOVA component up to ``max_order`` for one tree."""
    k = tree.n_dims
    mean = tree.mean
    components: dict[tuple[int, ...], np.ndarray] = {(): np.array(mean)}
    out = {}
    for order in range(1, min(max_order, k) + 1):
        for U in itertools.combinations(range(k), order):
            grid, widths = _marginal_grid(tree, U)
            f = grid.copy()
            for r in range(order):
                for W in itertools.combinations(U, r):
                    comp = components[W]
                    shape = [grid.shape[U.index(d)] if d in W else 1 for d in U]
                    f = f - comp.reshape(shape)
            components[U] = f
            cell = np.ones(())
            for wd in widths:
                cell = np.multiply.outer(cell, wd)
            out[U] = float(np.sum(f ** 2 * cell))
    return out


@dataclass
class MarginalReport:
    """Variance fractions per parameter subset, averaged over trees."""

    names: tuple[str, ...]
    fractions: dict[tuple[str, ...], float]
    total_variance: float
    threshold: float = FILTER
    n_trees: int = 0
    filtered: dict[tuple[str, ...], bool] = field(default_factory=dict)

    def table(self, include_filtered: bool = False) -> list[tuple[tuple[str, ...], float]]:
        rows = [(s, f) for s, f in self.fractions.items() if include_filtered or not self.filtered.get(s)]
        return sorted(rows, key=lambda r: (-r[1], len(r[0]), r[0]))

    def to_records(self, include_filtered: bool = False) -> list[dict]:
        return [{"subset": list(s), "fraction": f, "filtered": bool(self.filtered.get(s))}
                for s, f in self.table(include_filtered)]


def fit_forest(X, y, n_trees: int = 100, rng=None, min_leaf: int = 5) -> list[PartitionTree]:
    """Bootstrap regression forest on encoded configurations, as partition trees.

    Every node considers all dimensions for splitting.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < min_leaf:
        raise ImportanceError(f"{len(y)} trials, fewer than the minimum leaf size {min_leaf}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    forest = RandomForest(n_trees, mtry=X.shape[1], min_leaf=min_leaf).fit(X, y, rng)
    return [PartitionTree.from_tree(t, X.shape[1]) for t in forest.trees]


def trials_matrix(trials: Sequence, space: ParamSpace) -> tuple[np.ndarray, np.ndarray]:
    """Encoded configurations and fitness values from Trial objects or trial records."""
    X, y = [], []
    for t in trials:
        if isinstance(t, Mapping):
            cfg, fit = space.config_from_json(t["config"]), t["fitness"]
        else:
            cfg, fit = t.config, t.fitness
        X.append(encode(space, cfg))
        y.append(float(fit))
    return np.array(X).reshape(len(X), len(space)), np.array(y)


def variance_decomposition(forest: Sequence[PartitionTree], names: Sequence[str] | None = None,
                           max_order: int = 2, threshold: float = FILTER) -> MarginalReport:
    """Average per-tree variance fractions of all subsets up to ``max_order``.

    Trees with zero variance are skipped; if all are constant every
    fraction is 0. Subsets below ``threshold`` are flagged as filtered.
    """
    if not forest:
        raise ImportanceError("empty forest")
    k = forest[0].n_dims
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(k))
    subsets = [U for o in range(1, min(max_order, k) + 1) for U in itertools.combinations(range(k), o)]
    sums = {U: 0.0 for U in subsets}
    used = 0
    total = 0.0
    for tree in forest:
        V = tree.variance
        total += V
        if V <= 1e-15:
            continue
        used += 1
        for U, v in subset_variances(tree, max_order).items():
            sums[U] += v / V
    fractions = {tuple(names[j] for j in U): (sums[U] / used if used else 0.0) for U in subsets}
    filtered = {s: f < threshold for s, f in fractions.items()}
    return MarginalReport(names, fractions, total / len(forest), threshold, len(forest), filtered)


def importance(trials: Sequence, space: ParamSpace, n_trees: int = 100, seed: int = 0,
               max_order: int = 2, threshold: float = FILTER) -> MarginalReport:
    """Fit the forest on ``trials`` and decompose its variance."""
    X, y = trials_matrix(trials, space)
    forest = fit_forest(X, y, n_trees, np.random.default_rng(seed))
    return variance_decomposition(forest, space.names if not callable(space.names) else space.names(),
                                  max_order, threshold)


def grid_anova(values: np.ndarray) -> dict[tuple[int, ...], float]:
    """Functional ANOVA of a function tabulated on a uniform product grid.

    ``values`` has one axis per dimension; returns every subset's variance.
    """
    f = np.asarray(values, dtype=float)
    k = f.ndim
    axes = tuple(range(k))
    comps: dict[tuple[int, ...], np.ndarray] = {(): np.array(f.mean())}
    out = {}
    for order in range(1, k + 1):
        for U in itertools.combinations(axes, order):
            other = tuple(a for a in axes if a not in U)
            g = f.mean(axis=other, keepdims=True) if other else f.copy()
            for r in range(order):
                for W in itertools.combinations(U, r):
                    g = g - comps[W]
            comps[U] = g
            out[U] = float(np.mean(np.broadcast_to(g, f.shape) ** 2))
    return out
