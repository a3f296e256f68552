"""Conditional-inference-style learner with test-based stopping.

At each node a random subset of ``mtry`` features is tested for
association with the class (one-way ANOVA F-test for numeric features,
chi-square test for categorical ones). The smallest Bonferroni-adjusted
p-value decides whether to split; the split point itself is Gini-optimal.
"""

from __future__ import annotations

import numpy as np

from ._split import anova_pvalue, chi2_pvalue, gini_categorical, gini_numeric, majority_side
from .base import binary_model, resolve_params, training_arrays
from ._kernels import preorder_map


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(0 if rng is None else rng)


def association_pvalues(X, y, schema, rows, features) -> np.ndarray:
    """Unadjusted p-value of each candidate feature's association with the class."""
    out = np.ones(len(features))
    yr = y[rows]
    for k, f in enumerate(features):
        x = X[rows, f]
        known = ~np.isnan(x)
        if known.sum() < 2:
            continue
        if schema.categorical[f]:
            out[k] = chi2_pvalue(x[known], yr[known], int(schema.n_categories[f]), schema.n_classes)
        else:
            out[k] = anova_pvalue(x[known], yr[known])
    return out


def fit_ctree(data, params=None, rng=None):
    """Fit a conditional-inference-style tree.

    Parameters
    ----------
    data : Dataset or (X, y, schema)
    params : mapping, optional
        ``mincriterion``, ``minsplit``, ``minbucket``, ``mtry`` (0 = all
        features), ``maxdepth``, ``stump``.
    rng : numpy Generator or int, optional
        Drives the per-node feature subsampling when ``mtry`` > 0.
    """
    X, y, schema = training_arrays(data)
    p = resolve_params("ctree", params, X.shape[1])
    rng = _as_rng(rng)
    C = schema.n_classes
    d = X.shape[1]
    mtry = d if p["mtry"] == 0 else min(p["mtry"], d)
    maxdepth = 1 if p["stump"] else p["maxdepth"]

    feature, threshold, left, right, counts, depth, routes, missing_side = [], [], [], [], [], [], [], []

    def new_node(rows, dep):
        for lst, v in ((feature, -1), (threshold, np.nan), (left, -1), (right, -1),
                       (depth, dep), (routes, None), (missing_side, 0)):
            lst.append(v)
        counts.append(np.bincount(y[rows], minlength=C))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y)), 0), np.arange(len(y)))]
    while stack:
        t, rows = stack.pop()
        m = len(rows)
        if (m < p["minsplit"] or m < 2 * p["minbucket"] or depth[t] >= maxdepth
                or counts[t].max() == m):
            continue
        cand = np.sort(rng.choice(d, size=mtry, replace=False)) if mtry < d else np.arange(d)
        pv = association_pvalues(X, y, schema, rows, cand)
        adjusted = np.minimum(1.0, pv * len(cand))
        k = int(np.argmin(adjusted))
        if not 1.0 - adjusted[k] > p["mincriterion"]:
            continue
        f = int(cand[k])
        x = X[rows, f]
        known = ~np.isnan(x)
        yk = y[rows][known]
        if schema.categorical[f]:
            score, route = gini_categorical(x[known], yk, C, int(schema.n_categories[f]), p["minbucket"])
            thr = np.nan
        else:
            score, thr, _ = gini_numeric(x[known], yk, C, p["minbucket"])
            route = None
        if not np.isfinite(score):
            continue
        side = np.full(m, -1, dtype=np.int64)
        if route is None:
            side[known] = np.where(x[known] < thr, 0, 1)
        else:
            side[known] = route[x[known].astype(np.int64)]
        maj = majority_side(np.sum(side == 0), np.sum(side == 1))
        side[side < 0] = maj
        lrows, rrows = rows[side == 0], rows[side == 1]
        feature[t], threshold[t], routes[t], missing_side[t] = f, thr, route, maj
        lt = new_node(lrows, depth[t] + 1)
        rt = new_node(rrows, depth[t] + 1)
        left[t], right[t] = lt, rt
        stack.append((rt, rrows))
        stack.append((lt, lrows))

    left = np.array(left, dtype=np.int64)
    right = np.array(right, dtype=np.int64)
    new_index = preorder_map(left, right, np.zeros(len(left), dtype=np.bool_))
    return binary_model("ctree", d, C, new_index, np.array(feature), np.array(threshold), left, right,
                        np.array(counts), np.array(depth), routes, np.array(missing_side), params=p)
