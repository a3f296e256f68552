"""Compiled kernels: tree routing and the all-numeric CART grower."""

import numpy as np
from numba import njit

# minimum impurity decrease (in instance units) for a split to count
MIN_GAIN = 1e-9


@njit(cache=True)
def apply_tree(X, kind, feature, threshold, child_offset, child_index, route_offset, route_child,
               missing_child):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        t = 0
        while kind[t] != 0:
            v = X[i, feature[t]]
            pos = -1
            if not np.isnan(v):
                if kind[t] == 1:
                    pos = 0 if v < threshold[t] else 1
                else:
                    c = int(v)
                    if 0 <= c < route_offset[t + 1] - route_offset[t]:
                        pos = route_child[route_offset[t] + c]
            if pos < 0:
                pos = missing_child[t]
            t = child_index[child_offset[t] + pos]
        out[i] = t
    return out


@njit(cache=True)
def split_threshold(a, b):
    """Midpoint of two consecutive distinct values, kept strictly above ``a``."""
    t = a + (b - a) / 2.0
    if t <= a or t > b:
        t = b
    return t


@njit(cache=True)
def presort(X):
    n, d = X.shape
    order = np.empty((d, n), dtype=np.int64)
    for f in range(d):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    return order


@njit(cache=True)
def restrict_order(order, rows, n_total):
    """Sorted orders of the sub-matrix ``X[rows]`` derived from the full orders."""
    d = order.shape[0]
    m = rows.shape[0]
    pos = np.full(n_total, -1, dtype=np.int64)
    for i in range(m):
        pos[rows[i]] = i
    out = np.empty((d, m), dtype=np.int64)
    for f in range(d):
        k = 0
        for i in range(order.shape[1]):
            p = pos[order[f, i]]
            if p >= 0:
                out[f, k] = p
                k += 1
    return out


@njit(cache=True)
def cart_grow(X, y, n_classes, order, minsplit, minbucket, maxdepth, alpha):
    """Grow a Gini tree on numeric data without missing values.

    Returns unpruned node arrays in creation order (children after parents).
    A node is not split when it is pure, smaller than ``minsplit`` or
    ``2 * minbucket``, at ``maxdepth``, or when its misclassification count
    is at most ``alpha`` (such a split could never survive pruning).
    """
    n, d = X.shape
    order = order.copy()
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.full(cap, np.nan)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    cl = np.zeros(n_classes, dtype=np.int64)
    cr = np.zeros(n_classes, dtype=np.int64)

    for i in range(n):
        counts[0, y[i]] += 1
    end[0] = n
    n_nodes = 1
    stack = np.empty(cap, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        t = stack[top]
        s = start[t]
        e = end[t]
        m = e - s
        big = 0
        sq_p = 0
        for c in range(n_classes):
            big = max(big, counts[t, c])
            sq_p += counts[t, c] * counts[t, c]
        risk = m - big
        if risk == 0 or m < minsplit or m < 2 * minbucket or depth[t] >= maxdepth or risk <= alpha:
            continue
        best = MIN_GAIN
        best_f = -1
        best_nl = 0
        for f in range(d):
            for c in range(n_classes):
                cl[c] = 0
                cr[c] = counts[t, c]
            sq_l = 0
            sq_r = sq_p
            for i in range(s, e - 1):
                idx = order[f, i]
                c = y[idx]
                sq_l += 2 * cl[c] + 1
                cl[c] += 1
                sq_r -= 2 * cr[c] - 1
                cr[c] -= 1
                nl = i - s + 1
                nr = m - nl
                if nl < minbucket:
                    continue
                if nr < minbucket:
                    break
                if X[idx, f] < X[order[f, i + 1], f]:
                    score = sq_l / nl + sq_r / nr - sq_p / m
                    if score > best:
                        best = score
                        best_f = f
                        best_nl = nl
        if best_f < 0:
            continue
        a = X[order[best_f, s + best_nl - 1], best_f]
        b = X[order[best_f, s + best_nl], best_f]
        feature[t] = best_f
        threshold[t] = split_threshold(a, b)
        for i in range(s, e):
            goes_left[order[best_f, i]] = i < s + best_nl
        for f in range(d):
            lpos = s
            r = 0
            for i in range(s, e):
                idx = order[f, i]
                if goes_left[idx]:
                    order[f, lpos] = idx
                    lpos += 1
                else:
                    buf[r] = idx
                    r += 1
            for j in range(r):
                order[f, lpos + j] = buf[j]
        lt = n_nodes
        rt = n_nodes + 1
        n_nodes += 2
        left[t] = lt
        right[t] = rt
        start[lt] = s
        end[lt] = s + best_nl
        start[rt] = s + best_nl
        end[rt] = e
        depth[lt] = depth[t] + 1
        depth[rt] = depth[t] + 1
        for i in range(s, s + best_nl):
            counts[lt, y[order[0, i]]] += 1
        for i in range(s + best_nl, e):
            counts[rt, y[order[0, i]]] += 1
        stack[top] = rt
        stack[top + 1] = lt
        top += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            counts[:n_nodes], depth[:n_nodes])


@njit(cache=True)
def cost_complexity_prune(left, right, risk, alpha):
    """Smallest subtree minimizing ``risk + alpha * leaves`` under binary node arrays.

    Children must have larger indices than their parent. Returns a boolean
    array marking internal nodes that become leaves. A split survives only if
    it lowers the risk by more than ``alpha`` per added leaf.
    """
    n = left.shape[0]
    sub_risk = np.zeros(n)
    sub_leaves = np.zeros(n, dtype=np.int64)
    collapsed = np.zeros(n, dtype=np.bool_)
    for t in range(n - 1, -1, -1):
        if left[t] < 0:
            sub_risk[t] = risk[t]
            sub_leaves[t] = 1
            continue
        r = sub_risk[left[t]] + sub_risk[right[t]]
        k = sub_leaves[left[t]] + sub_leaves[right[t]]
        if risk[t] - r <= alpha * (k - 1):
            collapsed[t] = True
            sub_risk[t] = risk[t]
            sub_leaves[t] = 1
        else:
            sub_risk[t] = r
            sub_leaves[t] = k
    return collapsed


@njit(cache=True)
def preorder_map(left, right, collapsed):
    """New preorder index for every node kept after collapsing (-1 when dropped)."""
    n = left.shape[0]
    new = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    stack[0] = 0
    top = 1
    k = 0
    while top > 0:
        top -= 1
        t = stack[top]
        new[t] = k
        k += 1
        if left[t] >= 0 and not collapsed[t]:
            stack[top] = right[t]
            stack[top + 1] = left[t]
            top += 2
    return new


@njit(cache=True)
def node_risk(counts):
    n = counts.shape[0]
    out = np.zeros(n)
    for t in range(n):
        total = 0.0
        big = 0.0
        for c in range(counts.shape[1]):
            total += counts[t, c]
            big = max(big, counts[t, c])
        out[t] = total - big
    return out


@njit(cache=True)
def cart_fit_predict(X, y, n_classes, order, minsplit, minbucket, maxdepth, cp, X_test):
    """Grow, prune and predict in one call (no model object)."""
    n = X.shape[0]
    big = 0
    root = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        root[y[i]] += 1
    for c in range(n_classes):
        big = max(big, root[c])
    alpha = cp * (n - big)
    feature, threshold, left, right, counts, depth = cart_grow(
        X, y, n_classes, order, minsplit, minbucket, maxdepth, alpha)
    collapsed = cost_complexity_prune(left, right, node_risk(counts), alpha)
    m = X_test.shape[0]
    pred = np.empty(m, dtype=np.int64)
    for i in range(m):
        t = 0
        while left[t] >= 0 and not collapsed[t]:
            if X_test[i, feature[t]] < threshold[t]:
                t = left[t]
            else:
                t = right[t]
        best = 0
        for c in range(1, n_classes):
            if counts[t, c] > counts[t, best]:
                best = c
        pred[i] = best
    n_kept = 0
    new = preorder_map(left, right, collapsed)
    for t in range(new.shape[0]):
        if new[t] >= 0:
            n_kept += 1
    return pred, n_kept
