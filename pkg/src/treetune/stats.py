"""Paired and multi-dataset comparison of tuning techniques."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

EXACT_LIMIT = 25

# Studentized range quantiles for infinite degrees of freedom divided by sqrt(2),
# indexed by the number of compared techniques k = 2..10.
NEMENYI_Q = {
    0.05: (1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030879, 3.101730, 3.163684),
    0.10: (1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889),
}


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences
    p: float
    verdict: str  # 'improve', 'degrade' or 'tie'
    n: int


def _signed_rank_null(doubled_ranks: np.ndarray) -> np.ndarray:
    """Null distribution of twice the positive-rank sum, by subset-sum counting."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts / counts.sum()


def wilcoxon_signed_rank(a, b, alpha: float = 0.05) -> WilcoxonResult:
    """Two-sided signed-rank test of ``a - b``; zero differences are dropped.

    Exact for up to 25 nonzero differences (ties get averaged ranks), normal
    approximation with tie correction beyond that. The verdict is 'improve'
    when ``a`` is significantly larger (by median difference), 'degrade' when
    smaller, otherwise 'tie'.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError("paired samples must be equal-length vectors")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, "tie", 0)
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_LIMIT:
        dist = _signed_rank_null(np.rint(2 * ranks))
        w2 = int(round(2 * w_plus))
        lower = dist[:w2 + 1].sum()
        upper = dist[w2:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        z = (w_plus - mean) / math.sqrt(var) if var > 0 else 0.0
        p = float(min(1.0, 2.0 * sps.norm.sf(abs(z))))
    verdict = "tie"
    if p < alpha:
        verdict = "improve" if np.median(d) > 0 else "degrade"
    return WilcoxonResult(w_plus, float(p), verdict, n)


def rank_matrix(scores) -> np.ndarray:
    """Per-dataset ranks of a techniques x datasets score matrix (1 = highest, ties averaged)."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise StatsError("score matrix must be two-dimensional")
    return np.column_stack([sps.rankdata(-scores[:, j]) for j in range(scores.shape[1])])


def average_ranks(scores) -> np.ndarray:
    return rank_matrix(scores).mean(axis=1)


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p: float
    reject: bool


def friedman_test(scores, alpha: float = 0.05) -> FriedmanResult:
    """Friedman chi-square over a techniques x datasets score matrix."""
    scores = np.asarray(scores, dtype=float)
    k, N = scores.shape
    if k < 3 or N < 2:
        raise StatsError("Friedman test needs at least 3 techniques and 2 datasets")
    R = average_ranks(scores)
    stat = 12.0 * N / (k * (k + 1)) * (np.sum(R ** 2) - k * (k + 1) ** 2 / 4.0)
    stat = max(0.0, float(stat))
    if stat <= 1e-12:
        return FriedmanResult(0.0, 1.0, False)
    p = float(sps.chi2.sf(stat, k - 1))
    return FriedmanResult(stat, p, p < alpha)


def nemenyi_cd(k: int, n_datasets: int, alpha: float = 0.05) -> float:
    """Critical difference of average ranks for ``k`` techniques over ``n_datasets``."""
    key = round(float(alpha), 10)
    table = {round(a, 10): q for a, q in NEMENYI_Q.items()}
    if key not in table or not 2 <= k <= 1 + len(table[key]):
        raise StatsError(f"no tabulated constant for k={k}, alpha={alpha}")
    if n_datasets < 1:
        raise StatsError("need at least one dataset")
    q = table[key][k - 2]
    return q * math.sqrt(k * (k + 1) / (6.0 * n_datasets))


def cd_groups(mean_ranks, cd: float) -> list[list[int]]:
    """Maximal runs (in rank order) of techniques whose rank spread is at most ``cd``.

    Returns lists of indices into ``mean_ranks``, each sorted by rank.
    """
    r = np.asarray(mean_ranks, dtype=float)
    if not np.all(np.isfinite(r)):
        raise StatsError("ranks must be finite")
    order = np.argsort(r, kind="stable")
    runs = []
    for i in range(len(order)):
        j = i
        while j + 1 < len(order) and r[order[j + 1]] - r[order[i]] <= cd:
            j += 1
        runs.append((i, j))
    groups = []
    last_end = -1
    for i, j in runs:
        if j > last_end:  # not contained in the previous run
            groups.append([int(t) for t in order[i:j + 1]])
            last_end = j
    return groups


def compare_reports(rows: list[dict], baseline: str = "defaults", alpha: float = 0.05,
                    cd_alpha: float = 0.1) -> dict:
    """Summaries from report rows: per-dataset Wilcoxon against the baseline, ranks, Friedman, CD.

    Each dataset/technique is summarized by per-seed mean BAC over outer folds;
    the rank matrix uses the mean over seeds.
    """
    table: dict[str, dict[str, dict[int, list[float]]]] = {}
    for r in rows:
        table.setdefault(r["dataset"], {}).setdefault(r["technique"], {}).setdefault(r["seed"], []).append(r["bac"])
    datasets = sorted(table)
    techniques = sorted({t for d in table.values() for t in d})
    out: dict = {"datasets": datasets, "techniques": techniques, "wilcoxon": []}
    for ds in datasets:
        arms = table[ds]
        if baseline not in arms:
            continue
        base = arms[baseline]
        for t in techniques:
            if t == baseline or t not in arms:
                continue
            seeds = sorted(set(base) & set(arms[t]))
            a = [np.mean(arms[t][s]) for s in seeds]
            b = [np.mean(base[s]) for s in seeds]
            res = wilcoxon_signed_rank(a, b, alpha)
            out["wilcoxon"].append({"dataset": ds, "technique": t, "baseline": baseline, "n": len(seeds),
                                    "mean": float(np.mean(a)), "baseline_mean": float(np.mean(b)),
                                    "statistic": res.statistic, "p": res.p, "verdict": res.verdict})
    complete = [ds for ds in datasets if all(t in table[ds] for t in techniques)]
    if complete and len(techniques) >= 2:
        M = np.array([[np.mean([np.mean(v) for v in table[ds][t].values()]) for ds in complete]
                      for t in techniques])
        ranks = average_ranks(M)
        out["mean_ranks"] = dict(zip(techniques, ranks.tolist()))
        if len(techniques) >= 3 and len(complete) >= 2:
            fr = friedman_test(M, alpha)
            out["friedman"] = {"statistic": fr.statistic, "p": fr.p, "reject": fr.reject}
        try:
            cd = nemenyi_cd(len(techniques), len(complete), cd_alpha)
        except StatsError:
            cd = None
        if cd is not None:
            groups = cd_groups(ranks, cd)
            out["cd"] = cd
            out["cd_diagram"] = [{"technique": techniques[t], "mean_rank": float(ranks[t]),
                                  "groups": [g for g, members in enumerate(groups) if t in members]}
                                 for t in range(len(techniques))]
    return out
