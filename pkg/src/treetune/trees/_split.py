"""Split search and association tests shared by the Python tree growers."""

from __future__ import annotations


import numpy as np
from scipy import stats

from ._kernels import MIN_GAIN, split_threshold

# exhaustive subset search for multiclass categorical splits up to this many levels
MAX_EXHAUSTIVE_LEVELS = 12


def class_counts(y: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(y, minlength=n_classes).astype(np.int64)


def gini_numeric(x: np.ndarray, y: np.ndarray, n_classes: int, minbucket: int):
    """Best Gini binary split of one numeric feature (no missing values).

    Returns ``(score, threshold, n_left)`` with score expressed as the
    decrease of ``n * gini`` or ``(-inf, nan, 0)`` when no admissible split
    exists. Ties go to the lowest threshold.
    """
    m = len(x)
    if m < 2 * minbucket or m < 2:
        return -np.inf, np.nan, 0
    order = np.argsort(x, kind="stable")
    xs = x[order]
    onehot = np.zeros((m, n_classes), dtype=np.int64)
    onehot[np.arange(m), y[order]] = 1
    cum = np.cumsum(onehot, axis=0)[:-1]
    total = cum[-1] + onehot[-1] if m > 1 else onehot[0]
    nl = np.arange(1, m)
    nr = m - nl
    ok = (xs[:-1] < xs[1:]) & (nl >= minbucket) & (nr >= minbucket)
    if not ok.any():
        return -np.inf, np.nan, 0
    sq_l = (cum ** 2).sum(axis=1)
    sq_r = ((total - cum) ** 2).sum(axis=1)
    sq_p = int((total ** 2).sum())
    score = sq_l / nl + sq_r / nr - sq_p / m
    score = np.where(ok, score, -np.inf)
    i = int(np.argmax(score))
    return float(score[i]), split_threshold(xs[i], xs[i + 1]), int(nl[i])


def _score_partition(cnt_l, cnt_r):
    nl, nr = cnt_l.sum(), cnt_r.sum()
    tot = cnt_l + cnt_r
    return (int((cnt_l ** 2).sum()) / nl + int((cnt_r ** 2).sum()) / nr
            - int((tot ** 2).sum()) / (nl + nr))


def gini_categorical(x: np.ndarray, y: np.ndarray, n_classes: int, n_levels: int, minbucket: int):
    """Best Gini binary partition of the levels of one categorical feature.

    Returns ``(score, route)`` where ``route[level]`` is 0 (left), 1 (right)
    or -1 for levels absent from the node.
    """
    table = np.zeros((n_levels, n_classes), dtype=np.int64)
    np.add.at(table, (x.astype(np.int64), y), 1)
    sizes = table.sum(axis=1)
    present = np.flatnonzero(sizes > 0)
    if len(present) < 2 or len(x) < 2 * minbucket:
        return -np.inf, None
    total = table.sum(axis=0)
    best, best_left = -np.inf, None
    if n_classes == 2 or len(present) > MAX_EXHAUSTIVE_LEVELS:
        # order levels by the share of the node's majority class, then scan prefixes
        target = 1 if n_classes == 2 else int(np.argmax(total))
        share = table[present, target] / sizes[present]
        ordered = present[np.lexsort((present, share))]
        cnt_l = np.zeros(n_classes, dtype=np.int64)
        for i in range(len(ordered) - 1):
            cnt_l = cnt_l + table[ordered[i]]
            nl = cnt_l.sum()
            if nl < minbucket or len(x) - nl < minbucket:
                continue
            s = _score_partition(cnt_l, total - cnt_l)
            if s > best:
                best, best_left = s, ordered[: i + 1]
    else:
        first, rest = present[0], present[1:]
        for mask in range(0, 2 ** len(rest) - 1):
            chosen = [first] + [rest[j] for j in range(len(rest)) if mask >> j & 1]
            cnt_l = table[chosen].sum(axis=0)
            nl = cnt_l.sum()
            if nl < minbucket or len(x) - nl < minbucket:
                continue
            s = _score_partition(cnt_l, total - cnt_l)
            if s > best:
                best, best_left = s, np.array(chosen)
    if best_left is None:
        return -np.inf, None
    route = np.full(n_levels, -1, dtype=np.int64)
    route[present] = 1
    route[best_left] = 0
    return float(best), route


def anova_pvalue(x: np.ndarray, y: np.ndarray) -> float:
    """One-way ANOVA F-test p-value of ``x`` across the classes in ``y``."""
    classes = np.unique(y)
    n, k = len(x), len(classes)
    if k < 2 or n <= k:
        return 1.0
    grand = x.mean()
    ssb = 0.0
    ssw = 0.0
    for c in classes:
        xc = x[y == c]
        mu = xc.mean()
        ssb += len(xc) * (mu - grand) ** 2
        ssw += ((xc - mu) ** 2).sum()
    scale = max(1.0, float(np.abs(x).max()))
    if ssb <= 1e-12 * scale * scale * n:
        return 1.0
    if ssw <= 1e-12 * scale * scale * n:
        return 0.0
    f = (ssb / (k - 1)) / (ssw / (n - k))
    return float(stats.f.sf(f, k - 1, n - k))


def chi2_pvalue(x: np.ndarray, y: np.ndarray, n_levels: int, n_classes: int) -> float:
    """Chi-square test of independence between category ``x`` and class ``y``."""
    table = np.zeros((n_levels, n_classes))
    np.add.at(table, (x.astype(np.int64), y), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    if r < 2 or c < 2:
        return 1.0
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    stat = float(((table - expected) ** 2 / expected).sum())
    return float(stats.chi2.sf(stat, (r - 1) * (c - 1)))


def majority_side(n_left: float, n_right: float) -> int:
    return 0 if n_left >= n_right else 1


def has_gain(score: float) -> bool:
    return score > MIN_GAIN

