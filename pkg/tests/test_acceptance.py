"""Acceptance criteria, one test per criterion, each timed against its runtime target."""

import itertools
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from treetune.complexity import ComplexityProfile, advise, f1, l2, n1, profile
from treetune.data import Dataset, balanced_accuracy, monks, stratified_folds
from treetune.harness import DEFAULTS, ExperimentPlan, audit_leakage, convergence_stats, load_trials, run_experiment
from treetune.importance import fit_forest, grid_anova, subset_variances, variance_decomposition
from treetune.space import BOOLEAN, CATEGORICAL, INTEGER, REAL, ParamSpace, ParamSpec, configurations
from treetune.stats import nemenyi_cd, wilcoxon_signed_rank
from treetune.trees import fit_cart, fit_j48
from treetune.tuners import TECHNIQUES, run_tuner

from test_trees import WEATHER, gain_ratio_oracle, weather


@contextmanager
def criterion(k, title, limit_s):
    """Record PASS/FAIL for criterion ``k``; the body fills ``state['detail']``."""
    state = {"detail": "", "ok": False}
    t0 = time.perf_counter()
    ACCEPTANCE[k] = (title, False, "(did not finish)")
    try:
        yield state
        state["ok"] = True
    finally:
        dt = time.perf_counter() - t0
        ok = state["ok"] and dt < limit_s
        ACCEPTANCE[k] = (title, ok, f"{state['detail']} [{dt:.1f}s / limit {limit_s:g}s]".strip())
    assert dt < limit_s, f"took {dt:.1f}s, limit {limit_s}s"


# 1 ---------------------------------------------------------------------------

def recall_oracle(cm):
    recalls = []
    for i in range(len(cm)):
        support = sum(cm[i])
        if support:
            recalls.append(cm[i][i] / support)
    return sum(recalls) / len(recalls)


def test_01_metric_oracle():
    with criterion(1, "balanced accuracy vs per-class recall oracle", 1) as st:
        r = np.random.default_rng(1)
        worst = 0.0
        for _ in range(50):
            c = int(r.integers(2, 8))
            cm = r.integers(0, 20, size=(c, c))
            cm[r.integers(c)] *= r.integers(0, 2)  # sometimes an absent class
            if cm.sum() == 0:
                cm[0, 0] = 1
            worst = max(worst, abs(balanced_accuracy(cm) - recall_oracle(cm.tolist())))
        st["detail"] = f"max error {worst:.1e} over 50 matrices"
        assert worst <= 1e-12


# 2 ---------------------------------------------------------------------------

def test_02_stratification():
    with criterion(2, "stratified folds within one of proportional", 10) as st:
        r = np.random.default_rng(2)
        worst = 0.0
        for i in range(200):
            c = int(r.integers(2, 6))
            n = int(r.integers(30, 300))
            y = r.choice(c, size=n, p=r.dirichlet(np.ones(c)))
            for k in (3, 10):
                plan = stratified_folds(y, k, seed=i, strict=False)
                for f in range(k):
                    test = y[plan.test_indices(f)]
                    for cls in range(c):
                        share = np.sum(y == cls) / k
                        worst = max(worst, abs(np.sum(test == cls) - share))
        st["detail"] = f"max deviation {worst:.3f} over 200 datasets x k in {{3,10}}"
        assert worst <= 1.0


# 3 ---------------------------------------------------------------------------

SPACE3 = ParamSpace("three", (
    ParamSpec("rate", REAL, 0.0001, 0.1, default=0.01),
    ParamSpec("size", INTEGER, 1, 50, default=20),
    ParamSpec("mode", CATEGORICAL, levels=(0, 1, 2), default=2),
))


def fitness3(cfg, instance=0):
    return float(0.8 - 40 * (cfg["rate"] - 0.03) ** 2 - 0.002 * abs(cfg["size"] - 12)
                 + 0.03 * (cfg["mode"] == 1) + 0.005 * np.sin(instance))


def test_03_budget_and_replay():
    with criterion(3, "900-evaluation budget and bit-identical replay", 120) as st:
        counts = {}
        for tech in sorted(TECHNIQUES):
            runs = []
            for _ in range(2):
                calls = [0]

                def fit(cfg, inst=0):
                    calls[0] += 1
                    return fitness3(cfg, inst)

                best, path = run_tuner(tech, SPACE3, fit, budget=900, seed=31, instance_fitness=fit)
                runs.append((best, [(t.config, t.fitness, t.instance) for t in path], calls[0]))
            (b1, p1, c1), (b2, p2, c2) = runs
            assert b1 == b2 and p1 == p2
            assert c1 == len(p1)
            if tech == "irace":
                assert c1 <= 900 and b1 is not None
            else:
                assert c1 == 900
            counts[tech] = c1
        st["detail"] = " ".join(f"{t}={n}" for t, n in counts.items())


# 4 ---------------------------------------------------------------------------

SPACE32 = ParamSpace("thirty-two", (
    ParamSpec("a", BOOLEAN, default=False),
    ParamSpec("b", BOOLEAN, default=False),
    ParamSpec("c", CATEGORICAL, levels=("x", "y", "z", "w"), default="x"),
    ParamSpec("d", INTEGER, 1, 2, default=1),
))


def fitness32(cfg):
    return (0.5 + 0.1 * cfg["a"] - 0.05 * cfg["b"] + {"x": 0.0, "y": 0.07, "z": 0.02, "w": -0.03}[cfg["c"]]
            + 0.01 * (cfg["d"] == 2) * (1 if cfg["a"] else -1))


def test_04_enumerable_argmax():
    with criterion(4, "best equals exhaustive argmax on 32 configurations", 60) as st:
        configs = configurations(SPACE32)
        assert len(configs) == 32
        oracle = max(configs, key=fitness32)
        got = {}
        for tech in sorted(TECHNIQUES):
            best, _ = run_tuner(tech, SPACE32, fitness32, budget=900, seed=4)
            got[tech] = best == oracle
        st["detail"] = " ".join(f"{t}={'ok' if v else 'MISS'}" for t, v in got.items())
        assert all(got.values())


# 5 ---------------------------------------------------------------------------

def test_05_nemenyi_constant():
    with criterion(5, "Nemenyi critical difference for k=7, N=94", 1) as st:
        cd = nemenyi_cd(7, 94, 0.1)
        st["detail"] = f"CD={cd:.4f}"
        assert cd == pytest.approx(0.848, abs=0.01)


# 6 ---------------------------------------------------------------------------

def test_06_fanova():
    with criterion(6, "variance conservation and additive pair importance", 60) as st:
        n = 50
        g = (np.arange(n) + 0.5) / n
        X = np.array(list(itertools.product(g, g)))

        def additive(a, b):
            return np.sin(3 * a) + b ** 2

        y = additive(X[:, 0], X[:, 1])
        forest = fit_forest(X, y, 100, np.random.default_rng(6))
        gap = max(abs(sum(subset_variances(t, 2).values()) - t.variance) for t in forest)
        total = np.mean([t.variance for t in forest])
        summed = np.mean([sum(subset_variances(t, 2).values()) for t in forest])
        oracle = grid_anova(additive(g[:, None], g[None, :]))
        pair = variance_decomposition(forest, ["a", "b"]).fractions[("a", "b")]
        st["detail"] = (f"per-tree gap {gap:.1e}, forest gap {abs(summed - total):.1e}, "
                        f"pair {pair:.4f} (grid oracle {oracle[(0, 1)]:.1e})")
        assert gap < 1e-6 and abs(summed - total) < 1e-6
        assert abs(oracle[(0, 1)]) < 1e-12
        assert pair < 0.01


# 7 ---------------------------------------------------------------------------

def test_07_tree_oracles():
    with criterion(7, "J48 root by gain ratio; CART one-split toy", 1) as st:
        ratios = [gain_ratio_oracle(WEATHER, j) for j in range(4)]
        j48 = fit_j48(weather())
        X = np.array([[0.1], [0.2], [0.3], [0.7], [0.8], [0.9]])
        y = np.array([0, 0, 0, 1, 1, 1])
        cart = fit_cart(Dataset.from_arrays("toy", X, y), {"minsplit": 2, "minbucket": 1})
        thr = cart.threshold[0]
        st["detail"] = f"root={j48.feature[0]} oracle={int(np.argmax(ratios))}; size={cart.n_nodes} thr={thr:.2f}"
        assert j48.feature[0] == int(np.argmax(ratios))
        assert cart.n_nodes == 3 and 0.3 < thr <= 0.7


# 8 / 11 ------------------------------------------------------------------------

def wine():
    from sklearn.datasets import load_wine
    d = load_wine()
    return Dataset.from_arrays("wine", d.data, d.target, class_names=list(d.target_names),
                               feature_names=list(d.feature_names))


REPRO_SEEDS = tuple(range(1, 11))


@pytest.fixture(scope="module")
def repro(tmp_path_factory):
    out = tmp_path_factory.mktemp("repro")
    t0 = time.perf_counter()
    reports = {}
    for data in (monks(1), monks(2), wine()):
        plan = ExperimentPlan(data.name, "cart", ("irace",), outer_k=10, inner_k=3, budget=900,
                              seeds=REPRO_SEEDS, n_instances=100)
        reports[data.name] = run_experiment(plan, data, out=out)
    return reports, out, time.perf_counter() - t0


@pytest.mark.slow
def test_08_tuned_cart_beats_defaults(repro):
    reports, _, elapsed = repro
    with criterion(8, "Irace-tuned CART beats defaults (p<0.05) on >= 2 of 3 datasets", 1800) as st:
        wins, parts = 0, []
        for name, rep in reports.items():
            tuned, base = rep.mean_bac("irace"), rep.mean_bac(DEFAULTS)
            a = [tuned[s] for s in REPRO_SEEDS]
            b = [base[s] for s in REPRO_SEEDS]
            res = wilcoxon_signed_rank(a, b)
            wins += res.verdict == "improve"
            parts.append(f"{name}: {np.mean(a):.3f} vs {np.mean(b):.3f} p={res.p:.4f}")
        st["detail"] = "; ".join(parts) + f"; run {elapsed:.0f}s"
        assert elapsed < 1800
        assert wins >= 2


@pytest.mark.slow
def test_09_convergence_logging(repro):
    _, out, _ = repro
    with criterion(9, "monotone best-so-far curves; flat-after-37 path gives 37", 60) as st:
        flat = list(np.linspace(0.2, 0.9, 37)) + [0.9] * 63
        assert convergence_stats(flat, 0.0) == 37
        n_paths = 0
        for f in Path(out).glob("*/cart/irace/seed*/trials.jsonl"):
            trials = load_trials(f)
            for fold in {t["fold"] for t in trials}:
                fit = np.array([t["fitness"] for t in trials if t["fold"] == fold])
                assert np.all(np.diff(np.maximum.accumulate(fit)) >= 0)
                n_paths += 1
        for tech in sorted(TECHNIQUES):
            _, path = run_tuner(tech, SPACE3, fitness3, budget=200 if tech != "smbo" else 60, seed=9)
            assert np.all(np.diff(path.best_curve) >= 0)
            n_paths += 1
        st["detail"] = f"{n_paths} paths checked"
        assert n_paths == 3 * len(REPRO_SEEDS) * 10 + len(TECHNIQUES)


def test_10_complexity():
    with criterion(10, "complexity oracles, ranges and advice rules", 60) as st:
        y2 = np.array([0, 0, 1, 1])
        assert f1((np.array([[0.0], [2.0], [0.0], [2.0]]), y2)) == 0.0
        chain = np.arange(8.0)[:, None]
        assert n1((chain, np.array([0, 1] * 4))) == 1.0
        assert l2((np.array([[0.0], [0.2], [0.8], [1.0]]), y2)) == 0.0
        r = np.random.default_rng(10)
        for _ in range(100):
            n, d, c = int(r.integers(10, 60)), int(r.integers(1, 5)), int(r.integers(2, 5))
            y = np.arange(n) % c
            p = profile((r.random((n, d)), r.permutation(y)))
            assert all(0.0 <= v <= 1.0 for v in (p.f3, p.f4, p.n1, p.n4, p.l2))
            assert p.f1 >= 0 and p.n2 >= 0
        base = dict(f1=1.0, f3=0.5, f4=0.5, n1=0.1, n2=0.3, n4=0.1, l2=0.5, cls=2)
        mk = lambda **kw: ComplexityProfile(**{**base, **kw})
        verdicts = [
            advise(mk(cls=10), "j48").verdict == "tune",
            advise(mk(f4=0.9), "j48").verdict == "defaults",
            advise(mk(n1=0.3, f3=0.02, n4=0.1), "cart").verdict == "defaults",
            advise(mk(n2=0.6), "ctree").verdict == "tune",
        ]
        st["detail"] = f"{sum(verdicts)}/4 rule verdicts, 100 random profiles in range"
        assert all(verdicts)


@pytest.mark.slow
def test_11_no_leakage(repro):
    reports, out, _ = repro
    with criterion(11, "inner folds lie inside outer training splits", 30) as st:
        problems = []
        n_checked = 0
        for rep in reports.values():
            problems += audit_leakage(rep.folds)
            n_checked += sum(1 for rec in rep.folds.values() for k in rec if k.startswith("inner_rows_"))
        for d in Path(out).glob("*/cart/folds"):
            problems += audit_leakage(d)
        st["detail"] = f"{n_checked} outer folds x 100 instances audited, {len(problems)} problems"
        assert n_checked == 3 * len(REPRO_SEEDS) * 10
        assert problems == []
