"""Data-complexity measures and rules for deciding whether tuning pays off."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset

RIDGE = 1e-3
N4_SEED = 0


class ComplexityError(ValueError):
    pass


def _arrays(data):
    if isinstance(data, Dataset):
        return np.asarray(data.X, dtype=float), np.asarray(data.y), data.schema.categorical
    X, y = data[0], data[1]
    X = np.asarray(X, dtype=float)
    cat = np.asarray(data[2], dtype=bool) if len(data) > 2 else np.zeros(X.shape[1], dtype=bool)
    return X, np.asarray(y), cat


def normalize(X, categorical) -> np.ndarray:
    """Min-max scale numeric columns to [0, 1]; missing numeric cells take the column median."""
    Z = np.array(X, dtype=float)
    for j in np.flatnonzero(~categorical):
        col = Z[:, j]
        miss = np.isnan(col)
        if miss.all():
            Z[:, j] = 0.0
            continue
        col[miss] = np.median(col[~miss])
        lo, hi = col.min(), col.max()
        Z[:, j] = (col - lo) / (hi - lo) if hi > lo else 0.0
    return Z


def _distances_from(Z, cat, i) -> np.ndarray:
    """Distances from row ``i`` to all rows: Euclidean over numerics plus matching over categoricals."""
    num = ~cat
    d2 = np.sum((Z[:, num] - Z[i, num]) ** 2, axis=1)
    if cat.any():
        a, b = Z[:, cat], Z[i, cat]
        d2 += np.sum(~((a == b) & ~np.isnan(a)), axis=1)
    return np.sqrt(d2)


def _numeric_columns(X, cat):
    cols = np.flatnonzero(~cat)
    if len(cols) == 0:
        raise ComplexityError("measure needs at least one numeric feature")
    return cols


# -- feature-based measures ---------------------------------------------------

def f1(data) -> float:
    """Largest Fisher discriminant ratio over numeric features.

    Between-class variance of the class means (instance weighted) over the
    pooled within-class variance. A feature with zero within-class variance
    but distinct class means yields ``inf``.
    """
    X, y, cat = _arrays(data)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ComplexityError("f1 needs at least two classes")
    best = 0.0
    for j in _numeric_columns(X, cat):
        x = X[:, j]
        ok = ~np.isnan(x)
        x, yy = x[ok], y[ok]
        if len(x) == 0:
            continue
        mu = x.mean()
        between = within = 0.0
        for c in classes:
            xc = x[yy == c]
            if len(xc) == 0:
                continue
            between += len(xc) * (xc.mean() - mu) ** 2
            within += np.sum((xc - xc.mean()) ** 2)
        between /= len(x)
        within /= len(x)
        if within <= 1e-300:
            ratio = np.inf if between > 1e-300 else 0.0
        else:
            ratio = between / within
        best = max(best, ratio)
    return float(best)


def _outside_overlap(x, pos):
    """Mask of values outside the overlap of the two groups' ranges."""
    a, b = x[pos], x[~pos]
    if len(a) == 0 or len(b) == 0:
        return np.ones(len(x), dtype=bool)
    lo = max(a.min(), b.min())
    hi = min(a.max(), b.max())
    if lo > hi:
        return np.ones(len(x), dtype=bool)
    return (x < lo) | (x > hi)


def _one_vs_rest(y):
    classes = np.unique(y)
    if len(classes) == 2:
        return [y == classes[0]]
    return [y == c for c in classes]


def f3(data) -> float:
    """Maximum fraction of instances a single numeric feature places outside the class overlap."""
    X, y, cat = _arrays(data)
    cols = _numeric_columns(X, cat)
    Xn = normalize(X, cat)
    best = 0.0
    for pos in _one_vs_rest(y):
        for j in cols:
            best = max(best, float(np.mean(_outside_overlap(Xn[:, j], pos))))
    return best


def f4(data) -> float:
    """Fraction of instances removed by repeatedly applying the most efficient numeric feature."""
    X, y, cat = _arrays(data)
    cols = _numeric_columns(X, cat)
    Xn = normalize(X, cat)
    n = len(y)
    best = 0.0
    for pos in _one_vs_rest(y):
        keep = np.ones(n, dtype=bool)
        avail = list(cols)
        while keep.any() and avail:
            p = pos[keep]
            if p.all() or not p.any():
                keep[:] = False
                break
            counts = [int(_outside_overlap(Xn[keep, j], p).sum()) for j in avail]
            k = int(np.argmax(counts))
            if counts[k] == 0:
                break
            j = avail.pop(k)
            idx = np.flatnonzero(keep)
            keep[idx[_outside_overlap(Xn[keep, j], p)]] = False
        best = max(best, 1.0 - keep.sum() / n)
    return float(best)


# -- neighborhood measures ----------------------------------------------------

def minimum_spanning_tree(data) -> list[tuple[int, int]]:
    """Prim's algorithm over all instances; ties go to the lowest index."""
    X, y, cat = _arrays(data)
    Z = normalize(X, cat)
    n = len(y)
    if n < 2:
        return []
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    link = np.full(n, -1)
    edges = []
    cur = 0
    in_tree[0] = True
    for _ in range(n - 1):
        d = _distances_from(Z, cat, cur)
        closer = (d < best) & ~in_tree
        best[closer] = d[closer]
        link[closer] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        edges.append((int(min(link[nxt], nxt)), int(max(link[nxt], nxt))))
        in_tree[nxt] = True
        cur = nxt
    return edges


def n1(data) -> float:
    """Fraction of instances touching a minimum-spanning-tree edge between classes."""
    X, y, cat = _arrays(data)
    if len(y) < 2:
        raise ComplexityError("n1 needs at least two instances")
    boundary = np.zeros(len(y), dtype=bool)
    for a, b in minimum_spanning_tree(data):
        if y[a] != y[b]:
            boundary[a] = boundary[b] = True
    return float(boundary.mean())


def _nearest(Z, cat, y):
    n = len(y)
    intra = np.full(n, np.nan)
    inter = np.full(n, np.nan)
    for i in range(n):
        d = _distances_from(Z, cat, i)
        d[i] = np.inf
        same = y == y[i]
        if np.isfinite(d[same]).any():
            intra[i] = d[same].min()
        if (~same).any():
            inter[i] = d[~same].min()
    return intra, inter


def n2(data) -> float:
    """Sum of nearest same-class distances over sum of nearest other-class distances.

    Instances whose class has no other member are left out of the numerator.
    """
    X, y, cat = _arrays(data)
    if len(y) < 2:
        raise ComplexityError("n2 needs at least two instances")
    intra, inter = _nearest(normalize(X, cat), cat, y)
    den = np.nansum(inter)
    if den <= 0:
        return 0.0 if np.nansum(intra) == 0 else float("inf")
    return float(np.nansum(intra) / den)


def n4(data, rng=None) -> float:
    """1-NN error on points interpolated between random same-class pairs."""
    X, y, cat = _arrays(data)
    Z = normalize(X, cat)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(N4_SEED if rng is None else rng)
    n = len(y)
    if n < 2:
        raise ComplexityError("n4 needs at least two instances")
    errors = 0
    for i in range(n):
        same = np.flatnonzero(y == y[i])
        j = int(same[rng.integers(len(same))])
        lam = rng.random()
        p = Z[i].copy()
        num = ~cat
        p[num] = Z[i, num] + lam * (Z[j, num] - Z[i, num])
        if cat.any():
            p[cat] = np.where(rng.random(cat.sum()) < lam, Z[j, cat], Z[i, cat])
        diff = np.sum((Z[:, num] - p[num]) ** 2, axis=1)
        if cat.any():
            diff += np.sum(~((Z[:, cat] == p[cat]) & ~np.isnan(p[cat])), axis=1)
        errors += int(y[int(np.argmin(diff))] != y[i])
    return errors / n


def _design(X, cat, n_levels=None):
    Z = normalize(X, cat)
    cols = [Z[:, ~cat]]
    for j in np.flatnonzero(cat):
        vals = X[:, j]
        levels = np.unique(vals[~np.isnan(vals)])
        cols.append((vals[:, None] == levels[None, :]).astype(float))
    cols.append(np.ones((len(X), 1)))
    return np.hstack(cols)


def l2(data) -> float:
    """Training error of a ridge-regularized one-vs-rest least-squares linear classifier."""
    X, y, cat = _arrays(data)
    A = _design(X, cat)
    classes = np.unique(y)
    if len(classes) < 2:
        return 0.0
    T = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
    reg = RIDGE * np.eye(A.shape[1])
    reg[-1, -1] = 0.0  # leave the intercept unpenalized
    W = np.linalg.solve(A.T @ A + reg, A.T @ T)
    scores = A @ W
    if len(classes) == 2:
        pred = np.where(scores[:, 0] >= scores[:, 1], classes[0], classes[1])
    else:
        pred = classes[np.argmax(scores, axis=1)]
    return float(np.mean(pred != y))


# -- profile and advice -------------------------------------------------------

@dataclass(frozen=True)
class ComplexityProfile:
    f1: float
    f3: float
    f4: float
    n1: float
    n2: float
    n4: float
    l2: float
    cls: int
    flags: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d


def profile(data, rng=None) -> ComplexityProfile:
    """All seven measures plus the class count."""
    X, y, cat = _arrays(data)
    flags = []
    has_num = bool((~cat).any())
    v_f1 = f1(data) if has_num else float("nan")
    if np.isinf(v_f1):
        flags.append("f1 infinite: a feature has zero within-class variance")
    counts = np.unique(y, return_counts=True)[1]
    if (counts == 1).any():
        flags.append("n2 skipped singleton-class instances")
    return ComplexityProfile(
        v_f1, f3(data) if has_num else float("nan"), f4(data) if has_num else float("nan"),
        n1(data), n2(data), n4(data, rng), l2(data), int(len(np.unique(y))), tuple(flags))


@dataclass(frozen=True)
class Advice:
    learner: str
    verdict: str  # 'tune' or 'defaults'
    rules: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"learner": self.learner, "verdict": self.verdict, "rules": list(self.rules)}


def advise(p: ComplexityProfile, learner: str) -> Advice:
    """Threshold rules relating dataset complexity to the benefit of tuning.

    When rules pointing both ways fire, tuning wins and all fired rules are
    listed. With no rule fired, J48 and CTree fall back to defaults.
    """
    tune, keep = [], []
    if learner == "j48":
        if p.cls > 8:
            tune.append("cls > 8")
        if p.f1 < 0.06:
            tune.append("f1 < 0.06")
        if p.n1 > 0.218:
            tune.append("n1 > 0.218")
        if p.f4 > 0.8695:
            keep.append("f4 > 0.8695")
    elif learner == "cart":
        if p.n1 >= 0.278 and p.f3 > 0.0125 and p.n4 < 0.2545:
            keep.append("n1 >= 0.278 and f3 > 0.0125 and n4 < 0.2545")
        else:
            tune.append("not (n1 >= 0.278 and f3 > 0.0125 and n4 < 0.2545)")
    elif learner == "ctree":
        if p.n2 > 0.5595:
            tune.append("n2 > 0.5595")
        if p.l2 < 0.129:
            tune.append("l2 < 0.129")
    else:
        raise ComplexityError(f"unknown learner tag {learner!r}")
    verdict = "tune" if tune else "defaults"
    return Advice(learner, verdict, tuple(tune + keep))
