"""Random regression forest over the unit hypercube.

Used as the surrogate model of the model-based tuner and as the partition
model of the importance analysis. Trees are grown on bootstrap weights with
variance-reduction splits at midpoints between distinct values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True)
def _grow_forest(X, y, weights, seeds, mtry, min_leaf):
    n, k = X.shape
    n_trees = weights.shape[0]
    order_full = np.empty((k, n), dtype=np.int64)
    for f in range(k):
        order_full[f] = np.argsort(X[:, f], kind="mergesort")
    cap = 2 * n + 1
    total_cap = n_trees * cap
    feature = np.full(total_cap, -1, dtype=np.int64)
    threshold = np.full(total_cap, np.nan)
    left = np.full(total_cap, -1, dtype=np.int64)
    right = np.full(total_cap, -1, dtype=np.int64)
    value = np.zeros(total_cap)
    weight = np.zeros(total_cap)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)

    order = np.empty((k, n), dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.bool_)
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    stack = np.empty(cap, dtype=np.int64)
    feats = np.arange(k)
    base = 0
    for tr in range(n_trees):
        np.random.seed(seeds[tr])
        w = weights[tr]
        m = 0
        for f in range(k):
            m = 0
            for i in range(n):
                idx = order_full[f, i]
                if w[idx] > 0:
                    order[f, m] = idx
                    m += 1
        start[0] = 0
        end[0] = m
        n_nodes = 1
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            t = stack[top]
            s = start[t]
            e = end[t]
            wt = 0.0
            st = 0.0
            for i in range(s, e):
                idx = order[0, i]
                wt += w[idx]
                st += w[idx] * y[idx]
            mu = st / wt
            value[base + t] = mu
            weight[base + t] = wt
            if wt < 2 * min_leaf or e - s < 2:
                continue
            # partial Fisher-Yates draw of mtry candidate features
            for j in range(k):
                feats[j] = j
            for j in range(mtry):
                r = j + np.random.randint(k - j)
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp
            best = 1e-15
            best_f = -1
            best_pos = -1
            for jj in range(mtry):
                f = feats[jj]
                wl = 0.0
                sl = 0.0
                for i in range(s, e - 1):
                    idx = order[f, i]
                    wl += w[idx]
                    sl += w[idx] * (y[idx] - mu)
                    wr = wt - wl
                    if wl < min_leaf:
                        continue
                    if wr < min_leaf:
                        break
                    if X[idx, f] < X[order[f, i + 1], f]:
                        sr = -sl
                        score = sl * sl / wl + sr * sr / wr
                        if score > best:
                            best = score
                            best_f = f
                            best_pos = i
            if best_f < 0:
                continue
            a = X[order[best_f, best_pos], best_f]
            b = X[order[best_f, best_pos + 1], best_f]
            thr = a + (b - a) / 2.0
            if thr <= a or thr > b:
                thr = b
            feature[base + t] = best_f
            threshold[base + t] = thr
            nl = best_pos + 1 - s
            for i in range(s, e):
                goes_left[order[best_f, i]] = i <= best_pos
            for f in range(k):
                lpos = s
                rr = 0
                for i in range(s, e):
                    idx = order[f, i]
                    if goes_left[idx]:
                        order[f, lpos] = idx
                        lpos += 1
                    else:
                        buf[rr] = idx
                        rr += 1
                for j in range(rr):
                    order[f, lpos + j] = buf[j]
            lt = n_nodes
            rt = n_nodes + 1
            n_nodes += 2
            left[base + t] = lt
            right[base + t] = rt
            start[lt] = s
            end[lt] = s + nl
            start[rt] = s + nl
            end[rt] = e
            stack[top] = rt
            stack[top + 1] = lt
            top += 2
        base += n_nodes
        offsets[tr + 1] = base
    return offsets, feature[:base], threshold[:base], left[:base], right[:base], value[:base], weight[:base]


@njit(cache=True)
def _predict_forest(X, offsets, feature, threshold, left, right, value):
    n_trees = offsets.shape[0] - 1
    m = X.shape[0]
    out = np.empty((n_trees, m))
    for tr in range(n_trees):
        b = offsets[tr]
        for i in range(m):
            t = 0
            while left[b + t] >= 0:
                if X[i, feature[b + t]] < threshold[b + t]:
                    t = left[b + t]
                else:
                    t = right[b + t]
            out[tr, i] = value[b + t]
    return out


@dataclass(frozen=True)
class RegressionTree:
    """One fitted tree; node 0 is the root, children hold local indices."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        off = np.array([0, self.n_nodes], dtype=np.int64)
        return _predict_forest(X, off, self.feature, self.threshold, self.left, self.right, self.value)[0]


class RandomForest:
    """Bootstrap regression forest on inputs in ``[0, 1]^k``.

    Parameters
    ----------
    n_trees : int
    mtry : int, optional
        Candidate features per node; defaults to ``ceil(k / 3)``.
    min_leaf : int
        Minimum bootstrap weight in a leaf.
    bootstrap : bool
        Draw a bootstrap sample per tree; otherwise every tree sees all points.
    """

    def __init__(self, n_trees: int = 100, mtry: int | None = None, min_leaf: int = 5,
                 bootstrap: bool = True):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.bootstrap = bootstrap
        self._packed = None
        self.n_features = None

    def fit(self, X, y, rng: np.random.Generator) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        n, k = X.shape
        if n < self.min_leaf:
            raise ValueError(f"{n} observations, fewer than the minimum leaf size {self.min_leaf}")
        mtry = self.mtry if self.mtry is not None else max(1, int(np.ceil(k / 3)))
        mtry = min(max(1, mtry), k)
        if self.bootstrap:
            draws = rng.integers(0, n, size=(self.n_trees, n))
            weights = np.zeros((self.n_trees, n))
            for t in range(self.n_trees):
                weights[t] = np.bincount(draws[t], minlength=n)
        else:
            weights = np.ones((self.n_trees, n))
        seeds = rng.integers(0, 2**31 - 1, size=self.n_trees)
        self._packed = _grow_forest(X, y, weights, seeds, mtry, float(self.min_leaf))
        self.n_features = k
        return self

    @property
    def trees(self) -> list[RegressionTree]:
        off, feature, threshold, left, right, value, weight = self._packed
        return [RegressionTree(feature[a:b], threshold[a:b], left[a:b], right[a:b], value[a:b],
                               weight[a:b]) for a, b in zip(off[:-1], off[1:])]

    def predict_all(self, X) -> np.ndarray:
        """Per-tree predictions, shape ``(n_trees, n)``."""
        off, feature, threshold, left, right, value, _ = self._packed
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        return _predict_forest(X, off, feature, threshold, left, right, value)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Mean and standard deviation across trees."""
        p = self.predict_all(X)
        return p.mean(axis=0), p.std(axis=0)
