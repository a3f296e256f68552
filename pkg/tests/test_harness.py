import json

import numpy as np
import pytest

from treetune.data import Dataset, balance_scale
from treetune.harness import (DEFAULTS, CVFitness, ExperimentPlan, PhaseTimer, PlanError, audit_leakage,
                              convergence_stats, inner_plan, load_report, load_trials, outer_plan,
                              run_experiment)
from treetune.space import builtin_space

TIMING = ("tuning_s", "training_s", "testing_s")


def small_data(n=120, seed=0):
    r = np.random.default_rng(seed)
    X = r.random((n, 3))
    y = ((X[:, 0] > 0.5) ^ (r.random(n) < 0.15)).astype(np.int64)
    return Dataset.from_arrays("small", X, y)


PLAN = ExperimentPlan("small", "cart", ("rs", "ga"), outer_k=3, inner_k=3, budget=20, seeds=(1, 2))


@pytest.fixture(scope="module")
def report():
    return run_experiment(PLAN, small_data())


def test_convergence_examples():
    assert convergence_stats([0.1, 0.2, 0.3, 0.4, 0.5], 0.0) == 5
    flat = list(np.linspace(0.1, 0.8, 37)) + [0.8] * 20
    assert convergence_stats(flat, 0.0) == 37
    path = [0.3, 0.5, 0.45, 0.9]
    assert convergence_stats(path, 0.9 - 0.3) == 1


def test_report_completeness(report):
    assert len(report.rows) == len(PLAN.arms) * len(PLAN.seeds) * PLAN.outer_k
    assert PLAN.arms == (DEFAULTS, "rs", "ga")
    for arm in PLAN.arms:
        for s in PLAN.seeds:
            assert sorted(r.fold for r in report.select(arm, s)) == [0, 1, 2]
    assert all(0.0 <= r.bac <= 1.0 for r in report.rows)
    assert all(getattr(r, k) >= 0 for r in report.rows for k in TIMING)


def test_defaults_arm(report):
    for r in report.select(DEFAULTS):
        assert r.n_evaluations == 0 and r.tuning_s == 0.0
        assert r.config == builtin_space("cart", 3).default().to_dict()
    for r in report.select("rs"):
        assert r.n_evaluations == 20 and 1 <= r.converged_at <= 20


def test_no_leakage(report):
    assert audit_leakage(report.folds) == []
    bad = {s: dict(rec) for s, rec in report.folds.items()}
    rows = bad[1]["inner_rows_0"].copy()
    rows[0] = int(np.flatnonzero(bad[1]["outer"] == 0)[0])
    bad[1]["inner_rows_0"] = rows
    assert audit_leakage(bad) == ["seed 1 fold 0: inner rows overlap the outer test fold"]


def test_inner_rows_within_outer_training():
    d = small_data()
    outer = outer_plan(d.y, 3, 5)
    for m in range(3):
        tr = outer.train_indices(m)
        inner = inner_plan(d.y[tr], 3, 5, m)
        used = np.concatenate([tr[inner.train_indices(f)] for f in range(3)])
        assert set(used) <= set(tr)
        assert not set(used) & set(outer.test_indices(m))


def test_arms_share_outer_folds(report):
    # one outer plan per seed, shared by every arm
    for s in PLAN.seeds:
        assert np.array_equal(report.folds[s]["outer"], outer_plan(small_data().y, 3, s).assignment)


def test_replay_matches_except_timing(report):
    again = run_experiment(PLAN, small_data())
    strip = [{k: v for k, v in r.to_record().items() if k not in TIMING} for r in report.rows]
    assert strip == [{k: v for k, v in r.to_record().items() if k not in TIMING} for r in again.rows]


def test_parallel_matches_serial(report):
    par = run_experiment(PLAN, small_data(), jobs=2)
    assert [r.bac for r in par.rows] == [r.bac for r in report.rows]
    assert [r.config for r in par.rows] == [r.config for r in report.rows]


def test_constant_learner_scores_half():
    r = np.random.default_rng(0)
    X = r.random((60, 2))
    y = np.array([0, 1] * 30)
    d = Dataset.from_arrays("half", X, y)
    fit = CVFitness(d.X, d.y, d.schema, "cart", 3, seed=1)
    assert fit({"minbucket": 50}) == pytest.approx(0.5)
    assert CVFitness(d.X, d.y, d.schema, "j48", 3, seed=1)({"M": 50}) == pytest.approx(0.5)


def test_fast_and_general_fitness_agree():
    d = balance_scale()
    fast = CVFitness(d.X, d.y, d.schema, "cart", 3, seed=2, fold=1)
    slow = CVFitness(d.X, d.y, d.schema, "cart", 3, seed=2, fold=1)
    slow._fast = False
    for cfg in ({}, {"cp": 0.001, "minsplit": 5, "minbucket": 2, "maxdepth": 6}):
        for inst in (0, 3):
            assert fast(cfg, inst) == pytest.approx(slow(cfg, inst), abs=1e-12)


def test_instances_are_distinct_splits():
    d = small_data()
    fit = CVFitness(d.X, d.y, d.schema, "cart", 3, seed=1)
    a, b = fit.plan(0).assignment, fit.plan(1).assignment
    assert not np.array_equal(a, b)
    assert np.array_equal(a, fit.plan(0).assignment)


def test_phase_timer_and_tuning_contains_trials(tmp_path):
    t = PhaseTimer()
    with t.measure("x"):
        sum(range(1000))
    assert t["x"] > 0 and t["y"] == 0.0
    plan = ExperimentPlan("small", "cart", ("rs",), outer_k=3, budget=15, seeds=(3,))
    rep = run_experiment(plan, small_data(), out=tmp_path)
    base = tmp_path / "small" / "cart"
    trials = load_trials(base / "rs" / "seed3" / "trials.jsonl")
    assert len(trials) == 3 * 15
    for r in rep.select("rs"):
        wall = sum(tr["wall_ms"] for tr in trials if tr["fold"] == r.fold) / 1e3
        assert r.tuning_s >= wall - 3 * 15 * 1e-6
    rec = trials[0]
    assert {"experiment", "technique", "seed", "fold", "index", "config", "fitness", "wall_ms"} <= set(rec)


def test_outputs_layout(tmp_path):
    rep = run_experiment(PLAN, small_data(), out=tmp_path)
    base = tmp_path / "small" / "cart"
    assert json.loads((base / "plan.json").read_text())["budget"] == 20
    rows = load_report(base / "report.jsonl")
    assert len(rows) == len(rep.rows)
    assert audit_leakage(base / "folds") == []
    for arm in ("rs", "ga"):
        for s in PLAN.seeds:
            assert len(load_trials(base / arm / f"seed{s}" / "trials.jsonl")) == 3 * 20
    # microsecond precision in the serialized timings
    assert all(round(r["tuning_s"], 6) == r["tuning_s"] for r in rows)


def test_plan_validation():
    with pytest.raises(PlanError, match="budget below initial population"):
        ExperimentPlan("d", "cart", budget=5)
    with pytest.raises(PlanError):
        ExperimentPlan("d", "cart", seeds=(1, 1))
    with pytest.raises(PlanError):
        ExperimentPlan("d", "c50")
    with pytest.raises(PlanError):
        ExperimentPlan("d", "cart", outer_k=1)
    p = ExperimentPlan("d", "j48", ("ga", "pso"), seeds=(4, 9))
    assert ExperimentPlan.from_dict(json.loads(p.to_json())) == p
    with pytest.raises(PlanError):
        ExperimentPlan.from_dict({"dataset": "d", "learner": "cart", "bogus": 1})


def test_trial_count_for_full_plan_arithmetic():
    plan = ExperimentPlan("d", "cart", ("rs",), seeds=tuple(range(1, 31)))
    assert len(plan.seeds) * plan.outer_k * plan.budget == 270000


def test_unstratifiable_dataset():
    from treetune.data import DataError
    X = np.random.default_rng(0).random((12, 2))
    y = np.array([0] * 10 + [1] * 2)
    with pytest.raises(DataError):
        run_experiment(ExperimentPlan("u", "cart", ("rs",), outer_k=10, budget=10, seeds=(1,)),
                       Dataset.from_arrays("u", X, y))
