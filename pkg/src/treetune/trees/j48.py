"""C4.5-style learner: gain-ratio splits with pessimistic or reduced-error pruning."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from ..data import stratified_folds
from ._kernels import split_threshold
from .base import resolve_params, training_arrays
from .model import CATEGORICAL_SPLIT, LEAF, NUMERIC_SPLIT, TreeModel

# subtree raising and leaf replacement tolerate this many extra estimated errors
PRUNE_SLACK = 0.1


def entropy(counts) -> float:
    """Base-2 entropy of a count vector."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _row_entropy(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / np.where(total > 0, total, 1), 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1)), 0.0)
    return -(p * logs).sum(axis=1)


def split_entropy(sizes, n_unknown: float = 0.0) -> float:
    """Entropy of the branch-size distribution, unknowns counted as an extra branch."""
    return entropy(np.append(np.asarray(sizes, dtype=float), n_unknown))


def added_errors(n: float, e: float, cf: float) -> float:
    """Extra errors implied by the upper confidence bound on a leaf's error rate.

    ``n`` instances with ``e`` observed errors and confidence factor ``cf``.
    """
    if cf > 0.5:
        raise ValueError("confidence factor must not exceed 0.5")
    if e < 1:
        base = n * (1 - cf ** (1.0 / n))
        if e == 0:
            return base
        return base + e * (added_errors(n, 1, cf) - base)
    if e + 0.5 >= n:
        return max(n - e, 0.0)
    z = norm.ppf(1 - cf)
    f = (e + 0.5) / n
    r = (f + z * z / (2 * n) + z * math.sqrt(f / n - f * f / n + z * z / (4 * n * n))) / (1 + z * z / n)
    return r * n - e


def pessimistic_errors(counts, cf: float) -> float:
    total = float(np.sum(counts))
    if total <= 0:
        return 0.0
    wrong = total - float(np.max(counts))
    return wrong + added_errors(total, wrong, cf)


class _Node:
    __slots__ = ("counts", "rows", "feature", "threshold", "route", "n_branches", "children",
                 "depth", "prune_counts")

    def __init__(self, rows, counts, depth):
        self.rows = rows
        self.counts = counts
        self.depth = depth
        self.feature = -1
        self.threshold = np.nan
        self.route = None  # categorical: level -> branch
        self.n_branches = 0
        self.children: list[_Node] = []
        self.prune_counts = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def make_leaf(self):
        self.children = []
        self.feature = -1
        self.route = None
        self.n_branches = 0

    def largest_branch(self) -> int:
        return int(np.argmax([c.counts.sum() for c in self.children]))

    def branch_of(self, X: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Branch index for each row; missing values join the largest branch."""
        x = X[rows, self.feature]
        out = np.full(len(rows), -1, dtype=np.int64)
        known = ~np.isnan(x)
        if self.route is None:
            out[known] = np.where(x[known] < self.threshold, 0, 1)
        else:
            out[known] = self.route[x[known].astype(np.int64)]
        out[out < 0] = self.largest_branch()
        return out


class _Candidate:
    __slots__ = ("feature", "gain", "ratio", "threshold", "route", "n_branches")

    def __init__(self, feature, gain, ratio, threshold=np.nan, route=None, n_branches=2):
        self.feature, self.gain, self.ratio = feature, gain, ratio
        self.threshold, self.route, self.n_branches = threshold, route, n_branches


class _J48Builder:
    def __init__(self, X, y, schema, p, n_all):
        self.X, self.y, self.schema, self.p = X, y, schema, p
        self.C = schema.n_classes
        self.M = p["M"]
        self.n_all = n_all

    def counts(self, rows) -> np.ndarray:
        return np.bincount(self.y[rows], minlength=self.C).astype(float)

    # -- split evaluation -----------------------------------------------------
    def _numeric(self, f, rows, m):
        x = self.X[rows, f]
        known = ~np.isnan(x)
        xk, yk = x[known], self.y[rows][known]
        n_known = len(xk)
        min_split = min(max(0.1 * n_known / self.C, self.M), 25)
        if n_known < 2 * min_split:
            return None
        order = np.argsort(xk, kind="stable")
        xs, ys = xk[order], yk[order]
        onehot = np.zeros((n_known, self.C))
        onehot[np.arange(n_known), ys] = 1
        cum = np.cumsum(onehot, axis=0)[:-1]
        total = cum[-1] + onehot[-1]
        nl = np.arange(1, n_known, dtype=float)
        nr = n_known - nl
        ok = (xs[:-1] < xs[1:]) & (nl >= min_split) & (nr >= min_split)
        n_candidates = int(ok.sum())
        if n_candidates == 0:
            return None
        new_ent = (nl * _row_entropy(cum) + nr * _row_entropy(total - cum)) / n_known
        unknown_rate = (m - n_known) / m
        gains = (1 - unknown_rate) * (entropy(total) - new_ent)
        gains = np.where(ok, gains, -np.inf)
        i = int(np.argmax(gains))
        gain = float(gains[i])
        if not self.p["J"]:
            gain -= math.log2(n_candidates) / m
        if gain <= 0:
            return None
        se = split_entropy([nl[i], nr[i]], m - n_known)
        ratio = gain / se if se > 0 else 0.0
        return _Candidate(f, gain, ratio, threshold=split_threshold(xs[i], xs[i + 1]))

    def _nominal(self, f, rows, m):
        x = self.X[rows, f]
        known = ~np.isnan(x)
        L = int(self.schema.n_categories[f])
        lv = x[known].astype(np.int64)
        table = np.zeros((L, self.C))
        np.add.at(table, (lv, self.y[rows][known]), 1)
        n_known = table.sum()
        if n_known == 0:
            return None
        unknown_rate = (m - n_known) / m
        parent_ent = entropy(table.sum(axis=0))
        sizes = table.sum(axis=1)
        if self.p["B"]:
            best = None
            for v in range(L):
                bags = np.vstack([table[v], table.sum(axis=0) - table[v]])
                bsz = bags.sum(axis=1)
                if np.sum(bsz >= self.M) < 2:
                    continue
                gain = (1 - unknown_rate) * (parent_ent - (bsz * _row_entropy(bags)).sum() / n_known)
                se = split_entropy(bsz, m - n_known)
                ratio = gain / se if se > 0 else 0.0
                if best is None or ratio > best.ratio:
                    route = np.ones(L, dtype=np.int64)
                    route[v] = 0
                    best = _Candidate(f, gain, ratio, route=route, n_branches=2)
            return best
        if np.sum(sizes >= self.M) < 2:
            return None
        gain = (1 - unknown_rate) * (parent_ent - (sizes * _row_entropy(table)).sum() / n_known)
        se = split_entropy(sizes, m - n_known)
        ratio = gain / se if se > 0 else 0.0
        return _Candidate(f, gain, ratio, route=np.arange(L, dtype=np.int64), n_branches=L)

    def select(self, rows, counts):
        m = len(rows)
        if m < 2 * self.M or counts.max() == m:
            return None
        cands = []
        for f in range(self.X.shape[1]):
            if self.schema.categorical[f]:
                c = self._nominal(f, rows, m)
                many_levels = self.schema.n_categories[f] >= 0.3 * self.n_all
            else:
                c = self._numeric(f, rows, m)
                many_levels = False
            if c is not None:
                cands.append((c, not many_levels))
        averaged = [c.gain for c, counted in cands if counted]
        if not averaged:
            return None
        avg = sum(averaged) / len(averaged)
        best, best_ratio = None, 0.0
        for c, _ in cands:
            if c.gain >= avg - 1e-3 and c.ratio > best_ratio:
                best, best_ratio = c, c.ratio
        return best

    # -- growth ---------------------------------------------------------------
    def grow(self, rows, depth=0) -> _Node:
        node = _Node(rows, self.counts(rows), depth)
        split = self.select(rows, node.counts)
        if split is None:
            return node
        node.feature = split.feature
        node.threshold = split.threshold
        node.route = split.route
        node.n_branches = split.n_branches
        x = self.X[rows, split.feature]
        known = ~np.isnan(x)
        branch = np.full(len(rows), -1, dtype=np.int64)
        if split.route is None:
            branch[known] = np.where(x[known] < split.threshold, 0, 1)
        else:
            branch[known] = split.route[x[known].astype(np.int64)]
        sizes = np.bincount(branch[known], minlength=split.n_branches)
        branch[~known] = int(np.argmax(sizes))
        node.children = [self.grow(rows[branch == b], depth + 1) for b in range(split.n_branches)]
        return node

    # -- post-processing --------------------------------------------------------
    def collapse(self, node: _Node):
        if node.is_leaf:
            return
        subtree = self.training_errors(node)
        here = node.counts.sum() - node.counts.max()
        if subtree >= here - 1e-3:
            node.make_leaf()
        else:
            for c in node.children:
                self.collapse(c)

    def training_errors(self, node: _Node) -> float:
        if node.is_leaf:
            return float(node.counts.sum() - node.counts.max())
        return sum(self.training_errors(c) for c in node.children)

    def estimated_errors(self, node: _Node, cf: float) -> float:
        if node.is_leaf:
            return pessimistic_errors(node.counts, cf)
        return sum(self.estimated_errors(c, cf) for c in node.children)

    def branch_errors(self, node: _Node, rows: np.ndarray, cf: float) -> float:
        """Estimated errors if ``rows`` were pushed through the subtree at ``node``."""
        if node.is_leaf:
            return pessimistic_errors(self.counts(rows), cf)
        branch = node.branch_of(self.X, rows)
        return sum(self.branch_errors(c, rows[branch == b], cf) for b, c in enumerate(node.children))

    def redistribute(self, node: _Node, rows: np.ndarray):
        node.rows = rows
        node.counts = self.counts(rows)
        if node.is_leaf:
            return
        branch = node.branch_of(self.X, rows)
        for b, c in enumerate(node.children):
            self.redistribute(c, rows[branch == b])

    def prune_pessimistic(self, node: _Node, cf: float, raising: bool):
        if node.is_leaf:
            return
        for c in node.children:
            self.prune_pessimistic(c, cf, raising)
        big = node.largest_branch()
        if raising:
            err_branch = self.branch_errors(node.children[big], node.rows, cf)
        else:
            err_branch = math.inf
        err_leaf = pessimistic_errors(node.counts, cf)
        err_tree = self.estimated_errors(node, cf)
        if err_leaf <= err_tree + PRUNE_SLACK and err_leaf <= err_branch + PRUNE_SLACK:
            node.make_leaf()
            return
        if err_branch <= err_tree + PRUNE_SLACK:
            raised = node.children[big]
            node.feature, node.threshold, node.route = raised.feature, raised.threshold, raised.route
            node.n_branches, node.children = raised.n_branches, raised.children
            self.redistribute(node, node.rows)
            self._reset_depth(node, node.depth)
            self.prune_pessimistic(node, cf, raising)

    def _reset_depth(self, node: _Node, depth: int):
        node.depth = depth
        for c in node.children:
            self._reset_depth(c, depth + 1)

    def attach_prune_counts(self, node: _Node, X_prune, y_prune, rows):
        node.prune_counts = np.bincount(y_prune[rows], minlength=self.C).astype(float)
        if node.is_leaf:
            return
        x = X_prune[rows, node.feature]
        branch = np.full(len(rows), -1, dtype=np.int64)
        known = ~np.isnan(x)
        if node.route is None:
            branch[known] = np.where(x[known] < node.threshold, 0, 1)
        else:
            lv = x[known].astype(np.int64)
            branch[known] = node.route[lv]
        branch[branch < 0] = node.largest_branch()
        for b, c in enumerate(node.children):
            self.attach_prune_counts(c, X_prune, y_prune, rows[branch == b])

    def prune_reduced_error(self, node: _Node):
        if node.is_leaf:
            return
        for c in node.children:
            self.prune_reduced_error(c)
        if self._leaf_errors(node) <= self._tree_errors(node):
            node.make_leaf()

    @staticmethod
    def _leaf_errors(node: _Node) -> float:
        return float(node.prune_counts.sum() - node.prune_counts[int(np.argmax(node.counts))])

    def _tree_errors(self, node: _Node) -> float:
        if node.is_leaf:
            return self._leaf_errors(node)
        return sum(self._tree_errors(c) for c in node.children)


def _to_model(root: _Node, n_features, n_classes, laplace, params) -> TreeModel:
    kind, feature, threshold, missing, counts, depth = [], [], [], [], [], []
    child_lists, route_lists = [], []
    order: list[_Node] = []

    def visit(node):
        order.append(node)
        for c in node.children:
            visit(c)

    visit(root)
    ids = {id(n): i for i, n in enumerate(order)}
    for node in order:
        counts.append(node.counts)
        depth.append(node.depth)
        if node.is_leaf:
            kind.append(LEAF)
            feature.append(-1)
            threshold.append(np.nan)
            missing.append(-1)
            child_lists.append([])
            route_lists.append([])
            continue
        feature.append(node.feature)
        missing.append(node.largest_branch())
        child_lists.append([ids[id(c)] for c in node.children])
        if node.route is None:
            kind.append(NUMERIC_SPLIT)
            threshold.append(node.threshold)
            route_lists.append([])
        else:
            kind.append(CATEGORICAL_SPLIT)
            threshold.append(np.nan)
            route_lists.append(list(node.route))
    child_offset = np.concatenate([[0], np.cumsum([len(c) for c in child_lists])])
    route_offset = np.concatenate([[0], np.cumsum([len(r) for r in route_lists])])
    return TreeModel("j48", n_features, n_classes, kind, feature, threshold, child_offset,
                     [c for cl in child_lists for c in cl], route_offset,
                     [r for rl in route_lists for r in rl], missing, counts, depth,
                     laplace=laplace, params=params)


def fit_j48(data, params=None, rng=None) -> TreeModel:
    """Fit a C4.5-style tree.

    Parameters
    ----------
    data : Dataset or (X, y, schema)
    params : mapping, optional
        ``C``, ``M``, ``N``, ``O``, ``R``, ``B``, ``S``, ``A``, ``J``.
    rng : numpy Generator or int, optional
        Seeds the reduced-error pruning holdout (only used when ``R=True``).
    """
    X, y, schema = training_arrays(data)
    p = resolve_params("j48", params, X.shape[1])
    builder = _J48Builder(X, y, schema, p, len(y))
    all_rows = np.arange(len(y))
    if p["R"]:
        seed = rng if isinstance(rng, (int, np.integer)) else (
            int(rng.integers(2**31)) if rng is not None else 1)
        folds = stratified_folds(y, p["N"], seed, strict=False)
        grow_rows, prune_rows = folds.train_indices(0), folds.test_indices(0)
        root = builder.grow(grow_rows)
        if not p["O"]:
            builder.collapse(root)
        builder.attach_prune_counts(root, X, y, prune_rows)
        builder.prune_reduced_error(root)
    else:
        root = builder.grow(all_rows)
        if not p["O"]:
            builder.collapse(root)
        builder.prune_pessimistic(root, p["C"], raising=not p["S"])
    return _to_model(root, X.shape[1], schema.n_classes, p["A"], p)
