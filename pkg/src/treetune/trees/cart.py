"""CART-style learner: Gini binary splits and cost-complexity pruning."""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from ._split import gini_categorical, gini_numeric, has_gain, majority_side
from .base import binary_model, resolve_params, training_arrays
from .model import Surrogate, TreeModel

MAX_SURROGATES = 5


def fit_cart(data, params=None, rng=None, *, general: bool = False) -> TreeModel:
    """Fit a CART-style classification tree.

    Parameters
    ----------
    data : Dataset or (X, y, schema)
    params : mapping, optional
        ``cp``, ``minsplit``, ``minbucket``, ``maxdepth``, ``usesurrogate``,
        ``surrogatestyle``; omitted values take their defaults.
    rng : ignored
        CART growth is deterministic; accepted for a uniform learner signature.
    general : bool
        Force the Python grower even when the compiled one applies.
    """
    X, y, schema = training_arrays(data)
    p = resolve_params("cart", params, X.shape[1])
    n_classes = schema.n_classes
    alpha = p["cp"] * (len(y) - np.bincount(y, minlength=n_classes).max())
    if schema.all_numeric and not np.isnan(X).any() and not general:
        feature, threshold, left, right, counts, depth = K.cart_grow(
            np.ascontiguousarray(X), y, n_classes, K.presort(X), p["minsplit"], p["minbucket"],
            p["maxdepth"], alpha)
        routes = missing_side = surrogates = None
    else:
        grown = _GeneralGrower(X, y, schema, p, alpha).grow()
        feature, threshold, left, right, counts, depth, routes, missing_side, surrogates = grown
    collapsed = K.cost_complexity_prune(left, right, K.node_risk(counts.astype(float)), alpha)
    new_index = K.preorder_map(left, right, collapsed)
    return binary_model("cart", X.shape[1], n_classes, new_index, feature, threshold, left, right,
                        counts, depth, routes, missing_side, surrogates, params=p)


class _GeneralGrower:
    """Grower handling categorical features and missing values."""

    def __init__(self, X, y, schema, p, alpha):
        self.X, self.y, self.schema, self.p, self.alpha = X, y, schema, p, alpha
        self.C = schema.n_classes
        self.use_surrogates = p["usesurrogate"] > 0 and bool(np.isnan(X).any())
        self.style = p["surrogatestyle"]

    def grow(self):
        X, y, p = self.X, self.y, self.p
        feature, threshold, left, right, counts, depth = [], [], [], [], [], []
        routes, missing_side, surrogates = [], [], {}

        def new_node(rows, d):
            feature.append(-1)
            threshold.append(np.nan)
            left.append(-1)
            right.append(-1)
            counts.append(np.bincount(y[rows], minlength=self.C))
            depth.append(d)
            routes.append(None)
            missing_side.append(0)
            return len(feature) - 1

        stack = [(new_node(np.arange(len(y)), 0), np.arange(len(y)))]
        while stack:
            t, rows = stack.pop()
            m = len(rows)
            risk = m - counts[t].max()
            if (risk == 0 or m < p["minsplit"] or m < 2 * p["minbucket"] or depth[t] >= p["maxdepth"]
                    or risk <= self.alpha):
                continue
            split = self._best_split(rows)
            if split is None:
                continue
            f, thr, route = split
            side = self._primary_side(rows, f, thr, route)
            known = side >= 0
            nl_known = int(np.sum(side == 0))
            maj = majority_side(nl_known, int(np.sum(side == 1)))
            if self.use_surrogates:
                surr = self._surrogates(rows[known], side[known], f)
                if surr:
                    surrogates[t] = surr
                    for i in np.flatnonzero(~known):
                        for s in surr:
                            side[i] = s.side(X[rows[i], s.feature])
                            if side[i] >= 0:
                                break
            side[side < 0] = maj
            feature[t], threshold[t], routes[t], missing_side[t] = f, thr, route, maj
            lrows, rrows = rows[side == 0], rows[side == 1]
            lt = new_node(lrows, depth[t] + 1)
            rt = new_node(rrows, depth[t] + 1)
            left[t], right[t] = lt, rt
            stack.append((rt, rrows))
            stack.append((lt, lrows))
        return (np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64),
                np.array(depth, dtype=np.int64), routes, np.array(missing_side, dtype=np.int64),
                surrogates)

    def _best_split(self, rows):
        X, y, p, schema = self.X, self.y, self.p, self.schema
        m = len(rows)
        yr = y[rows]
        best, best_split = K.MIN_GAIN, None
        for f in range(X.shape[1]):
            x = X[rows, f]
            known = ~np.isnan(x)
            n_known = int(known.sum())
            if n_known < 2 * p["minbucket"] or n_known < 2:
                continue
            if schema.categorical[f]:
                score, route = gini_categorical(x[known], yr[known], self.C,
                                                int(schema.n_categories[f]), p["minbucket"])
                thr = np.nan
            else:
                score, thr, _ = gini_numeric(x[known], yr[known], self.C, p["minbucket"])
                route = None
            if n_known < m:
                score = score * (n_known / m)
            if score > best:
                best, best_split = score, (f, thr, route)
        return best_split if best_split is not None and has_gain(best) else None

    def _primary_side(self, rows, f, thr, route):
        x = self.X[rows, f]
        side = np.full(len(rows), -1, dtype=np.int64)
        known = ~np.isnan(x)
        if route is None:
            side[known] = np.where(x[known] < thr, 0, 1)
        else:
            side[known] = route[x[known].astype(np.int64)]
        return side

    def _surrogates(self, rows, side, primary):
        """Ranked backup splits that agree with the primary split better than the majority rule."""
        X, schema = self.X, self.schema
        found = []
        for g in range(X.shape[1]):
            if g == primary:
                continue
            x = X[rows, g]
            known = ~np.isnan(x)
            if known.sum() < 2:
                continue
            xs, target = x[known], side[known]
            n0, n1 = int(np.sum(target == 0)), int(np.sum(target == 1))
            if n0 == 0 or n1 == 0:
                continue
            if schema.categorical[g]:
                cand = self._categorical_surrogate(g, xs, target, n0, n1)
            else:
                cand = self._numeric_surrogate(g, xs, target, n0, n1)
            if cand is not None:
                found.append(cand)
        found.sort(key=lambda s: (-s.agreement, s.feature))
        return found[:MAX_SURROGATES]

    def _metric(self, agree0, agree1, n0, n1):
        if self.style == 0:
            return agree0 + agree1
        return 0.5 * (agree0 / n0 + agree1 / n1)

    def _baseline(self, n0, n1):
        return max(n0, n1) if self.style == 0 else 0.5

    def _numeric_surrogate(self, g, xs, target, n0, n1):
        order = np.argsort(xs, kind="stable")
        xv, tv = xs[order], target[order]
        c0 = np.cumsum(tv == 0)[:-1]
        c1 = np.cumsum(tv == 1)[:-1]
        ok = xv[:-1] < xv[1:]
        if not ok.any():
            return None
        # forward: x < thr goes left; reverse: x < thr goes right
        fwd = self._metric(c0, n1 - c1, n0, n1)
        rev = self._metric(n0 - c0, c1, n0, n1)
        fwd = np.where(ok, fwd, -np.inf)
        rev = np.where(ok, rev, -np.inf)
        i, j = int(np.argmax(fwd)), int(np.argmax(rev))
        reverse = rev[j] > fwd[i]
        k = j if reverse else i
        score = float(rev[j] if reverse else fwd[i])
        if score <= self._baseline(n0, n1):
            return None
        return Surrogate(g, K.split_threshold(xv[k], xv[k + 1]), bool(reverse), (), score)

    def _categorical_surrogate(self, g, xs, target, n0, n1):
        L = int(self.schema.n_categories[g])
        lv = xs.astype(np.int64)
        t0 = np.bincount(lv[target == 0], minlength=L)
        t1 = np.bincount(lv[target == 1], minlength=L)
        route = np.where(t0 + t1 == 0, -1, np.where(t0 >= t1, 0, 1))
        if not ((route == 0).any() and (route == 1).any()):
            return None
        agree0 = int(t0[route == 0].sum())
        agree1 = int(t1[route == 1].sum())
        score = float(self._metric(agree0, agree1, n0, n1))
        if score <= self._baseline(n0, n1):
            return None
        return Surrogate(g, np.nan, False, tuple(int(r) for r in route), score)
