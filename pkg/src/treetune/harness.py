"""Nested cross-validation experiments: outer assessment, inner tuning fitness.

For every repetition seed and outer fold, each tuning technique searches
the learner's space using the mean balanced accuracy of an inner k-fold
split of the outer-training part. The chosen configuration is refit on the
whole outer-training part and scored once on the outer-test fold. A
``defaults`` arm skips the search.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, DataError, FoldPlan, balanced_accuracy, confusion_matrix, stratified_folds
from .space import Configuration, ParamSpace, builtin_space
from .trees import LEARNERS
from .trees import _kernels as K
from .trees.base import resolve_params
from .tuners import OptimizationPath, run_tuner

DEFAULTS = "defaults"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run. ``seeds`` are the repetition seeds."""

    dataset: str
    learner: str
    techniques: tuple[str, ...] = ("irace",)
    outer_k: int = 10
    inner_k: int = 3
    budget: int = 900
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    n_instances: int = 100
    include_defaults: bool = True
    experiment_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "techniques", tuple(self.techniques))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.outer_k < 2 or self.inner_k < 2:
            raise PlanError("outer_k and inner_k must be at least 2")
        if self.budget < 10:
            raise PlanError(f"budget below initial population ({self.budget} < 10)")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise PlanError("seeds must be distinct and nonempty")
        if self.learner not in LEARNERS:
            raise PlanError(f"unknown learner tag {self.learner!r}")
        if not self.experiment_id:
            object.__setattr__(self, "experiment_id", f"{self.dataset}-{self.learner}")

    @property
    def arms(self) -> tuple[str, ...]:
        techs = tuple(t for t in self.techniques if t != DEFAULTS)
        return ((DEFAULTS,) if self.include_defaults or DEFAULTS in self.techniques else ()) + techs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["techniques"] = list(self.techniques)
        d["seeds"] = list(self.seeds)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentPlan":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise PlanError(str(exc)) from None


# ---------------------------------------------------------------------------
# Seeded fold family
# ---------------------------------------------------------------------------

def derived_seed(*key: int) -> int:
    """Deterministic 32-bit seed for a tuple of nonnegative integers."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


def outer_plan(y, k: int, seed: int) -> FoldPlan:
    return stratified_folds(y, k, derived_seed(seed, 0))


def inner_plan(y_train, k: int, seed: int, fold: int, instance: int = 0) -> FoldPlan:
    """Inner split of outer fold ``fold``; ``instance`` indexes the racing pool (0 = the shared one)."""
    return stratified_folds(y_train, k, derived_seed(seed, fold + 1, instance), strict=False)


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------

def _fit_predict(learner, X_tr, y_tr, schema, X_te, params, rng):
    model = LEARNERS[learner]((X_tr, y_tr, schema), params, rng)
    return model.predict(X_te), model


class CVFitness:
    """Mean balanced accuracy of a learner over stratified inner splits.

    Instance ``i`` is the ``i``-th seeded inner split of the training rows;
    calling the object with a configuration uses instance 0.

    Parameters
    ----------
    X, y, schema : training part (outer-training split)
    learner : str
    k : int
        Inner folds.
    seed, fold : int
        Repetition seed and outer fold index, which seed the split family.
    """

    def __init__(self, X, y, schema, learner: str, k: int = 3, seed: int = 0, fold: int = 0):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.ascontiguousarray(y, dtype=np.int64)
        self.schema = schema
        self.learner = learner
        self.k = k
        self.seed = seed
        self.fold = fold
        self.n_features = self.X.shape[1]
        self._fast = learner == "cart" and schema.all_numeric and not np.isnan(self.X).any()
        self._order = K.presort(self.X) if self._fast else None
        self._splits = lru_cache(maxsize=None)(self._make_splits)

    def plan(self, instance: int = 0) -> FoldPlan:
        return inner_plan(self.y, self.k, self.seed, self.fold, instance)

    def _make_splits(self, instance: int):
        plan = self.plan(instance)
        out = []
        for f in range(plan.k):
            tr, te = plan.train_indices(f), plan.test_indices(f)
            if len(tr) == 0 or len(te) == 0:
                continue
            order = K.restrict_order(self._order, tr, len(self.y)) if self._fast else None
            out.append((tr, te, order))
        return out

    def __call__(self, config, instance: int = 0) -> float:
        p = resolve_params(self.learner, config, self.n_features)
        C = self.schema.n_classes
        scores = []
        for f, (tr, te, order) in enumerate(self._splits(int(instance))):
            if self._fast:
                pred, _ = K.cart_fit_predict(self.X[tr], self.y[tr], C, order, p["minsplit"],
                                             p["minbucket"], p["maxdepth"], p["cp"], self.X[te])
            else:
                rng = np.random.default_rng(derived_seed(self.seed, self.fold + 1, instance, f + 1))
                pred, _ = _fit_predict(self.learner, self.X[tr], self.y[tr], self.schema, self.X[te], p, rng)
            scores.append(balanced_accuracy(confusion_matrix(self.y[te], pred, C)))
        return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    experiment: str
    dataset: str
    learner: str
    technique: str
    seed: int
    fold: int
    config: dict
    bac: float
    tree_size: int
    n_evaluations: int
    best_fitness: float | None
    converged_at: int | None
    tuning_s: float
    training_s: float
    testing_s: float

    def to_record(self) -> dict:
        rec = asdict(self)
        for key in ("tuning_s", "training_s", "testing_s"):
            rec[key] = round(rec[key], 6)
        return rec


@dataclass
class CellResult:
    row: ReportRow
    trials: list[dict] = field(default_factory=list)


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    rows: list[ReportRow]
    folds: dict  # seed -> arrays for the leakage audit

    def to_records(self) -> list[dict]:
        return [r.to_record() for r in self.rows]

    def select(self, technique: str | None = None, seed: int | None = None) -> list[ReportRow]:
        return [r for r in self.rows if (technique is None or r.technique == technique)
                and (seed is None or r.seed == seed)]

    def mean_bac(self, technique: str) -> dict[int, float]:
        """Per-seed mean outer-test BAC of one arm."""
        out = {}
        for s in self.plan.seeds:
            vals = [r.bac for r in self.select(technique, s)]
            if vals:
                out[s] = float(np.mean(vals))
        return out


def convergence_stats(path, epsilon: float = 1e-5) -> int:
    """First 1-based trial index whose running best is within ``epsilon`` of the final best."""
    f = path.best_curve if isinstance(path, OptimizationPath) else np.maximum.accumulate(
        np.asarray(path, dtype=float))
    if len(f) == 0:
        raise ValueError("empty path")
    return int(np.argmax(f >= f[-1] - epsilon)) + 1


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

class PhaseTimer:
    """Accumulates monotonic wall-clock durations per named phase."""

    def __init__(self):
        self.durations: dict[str, float] = {}

    def measure(self, phase: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.durations[phase] = timer.durations.get(phase, 0.0) + time.perf_counter() - self.t0
                return False

        return _Ctx()

    def __getitem__(self, phase: str) -> float:
        return self.durations.get(phase, 0.0)


def _run_cell(plan: ExperimentPlan, data: Dataset, space_json: str, technique: str, seed: int,
              fold: int, outer_assignment: np.ndarray) -> CellResult:
    space = ParamSpace.from_json(space_json)
    tr = np.flatnonzero(outer_assignment != fold)
    te = np.flatnonzero(outer_assignment == fold)
    schema = data.schema
    X_tr, y_tr = data.X[tr], data.y[tr]
    timer = PhaseTimer()
    trials: list[dict] = []
    best_fit = converged = None
    n_eval = 0
    if technique == DEFAULTS:
        config = space.default()
    else:
        fitness = CVFitness(X_tr, y_tr, schema, plan.learner, plan.inner_k, seed, fold)

        def record(trial):
            rec = trial.to_record()
            rec.update(experiment=plan.experiment_id, technique=technique, seed=seed, fold=fold)
            trials.append(rec)

        with timer.measure("tuning"):
            config, path = run_tuner(technique, space, fitness, plan.budget, derived_seed(seed, fold + 1, 7),
                                     instance_fitness=fitness, n_instances=plan.n_instances,
                                     on_trial=record)
        n_eval = len(path)
        best_fit = float(path.best().fitness)
        converged = convergence_stats(path)
    params = resolve_params(plan.learner, config, data.n_features)
    rng = np.random.default_rng(derived_seed(seed, fold + 1, 11))
    with timer.measure("training"):
        model = LEARNERS[plan.learner]((X_tr, y_tr, schema), params, rng)
    with timer.measure("testing"):
        pred = model.predict(data.X[te])
    bac = balanced_accuracy(confusion_matrix(data.y[te], pred, schema.n_classes))
    row = ReportRow(plan.experiment_id, data.name, plan.learner, technique, seed, fold,
                    Configuration(config).to_dict(), bac, int(model.n_nodes), n_eval, best_fit, converged,
                    timer["tuning"], timer["training"], timer["testing"])
    return CellResult(row, trials)


def _run_cell_packed(args):
    return _run_cell(*args)


def fold_record(plan: ExperimentPlan, data: Dataset, seed: int) -> dict:
    """Outer assignment plus the global row indices of every inner split used."""
    outer = outer_plan(data.y, plan.outer_k, seed)
    rec = {"outer": outer.assignment.copy()}
    techs = set(plan.arms) - {DEFAULTS}
    n_inst = plan.n_instances if "irace" in techs else 1
    if not techs:
        return rec
    for m in range(plan.outer_k):
        tr = outer.train_indices(m)
        assign = np.stack([inner_plan(data.y[tr], plan.inner_k, seed, m, i).assignment
                           for i in range(n_inst)])
        rec[f"inner_rows_{m}"] = tr
        rec[f"inner_assign_{m}"] = assign
    return rec


def run_experiment(plan: ExperimentPlan, data: Dataset, out: str | os.PathLike | None = None,
                   jobs: int = 1, space: ParamSpace | None = None, progress=None) -> ExperimentReport:
    """Execute every (seed, outer fold, arm) cell of ``plan`` on ``data``.

    Parameters
    ----------
    jobs : int
        Worker processes; cells are independent and results are folded back
        in plan order regardless of completion order.
    out : path, optional
        Root of the output tree; see :func:`write_outputs`.
    progress : callable, optional
        Called with each finished :class:`ReportRow`.
    """
    if not data.stratifiable(plan.outer_k):
        raise DataError(f"dataset {data.name} is not stratifiable into {plan.outer_k} folds")
    space = space or builtin_space(plan.learner, data.n_features)
    sj = space.to_json()
    folds = {s: fold_record(plan, data, s) for s in plan.seeds}
    cells = [(plan, data, sj, tech, s, m, folds[s]["outer"])
             for s in plan.seeds for m in range(plan.outer_k) for tech in plan.arms]
    results: list[CellResult] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_cell_packed, cells):
                results.append(res)
                if progress:
                    progress(res.row)
    else:
        for c in cells:
            res = _run_cell(*c)
            results.append(res)
            if progress:
                progress(res.row)
    report = ExperimentReport(plan, [r.row for r in results], folds)
    if out is not None:
        write_outputs(Path(out), plan, data, space, report, results)
    return report


def write_outputs(root: Path, plan, data, space, report, results) -> Path:
    """Write ``<root>/<dataset>/<learner>/`` with plan, space, report, folds and per-arm trial logs."""
    base = root / _safe(data.name) / plan.learner
    base.mkdir(parents=True, exist_ok=True)
    (base / "plan.json").write_text(plan.to_json())
    (base / "space.json").write_text(space.to_json())
    with open(base / "report.jsonl", "w") as fh:
        for rec in report.to_records():
            fh.write(json.dumps(rec) + "\n")
    (base / "folds").mkdir(exist_ok=True)
    for s, rec in report.folds.items():
        np.savez_compressed(base / "folds" / f"seed{s}.npz", **rec)
    for res in results:
        r = res.row
        d = base / r.technique / f"seed{r.seed}"
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "trials.jsonl", "a" if r.fold else "w") as fh:
            for t in res.trials:
                fh.write(json.dumps(t) + "\n")
    return base


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "dataset"


def audit_leakage(folds: dict | str | os.PathLike) -> list[str]:
    """Violations of the rule that inner rows of outer fold m lie in its training part.

    Accepts the in-memory fold records of a report or a ``folds/`` directory.
    """
    if not isinstance(folds, dict):
        folds = {p.stem: dict(np.load(p)) for p in sorted(Path(folds).glob("seed*.npz"))}
    problems = []
    for s, rec in folds.items():
        outer = np.asarray(rec["outer"])
        for key in rec:
            if not key.startswith("inner_rows_"):
                continue
            m = int(key.rsplit("_", 1)[1])
            rows = np.asarray(rec[key])
            if np.any(outer[rows] == m):
                problems.append(f"seed {s} fold {m}: inner rows overlap the outer test fold")
            assign = np.asarray(rec[f"inner_assign_{m}"])
            if assign.shape[-1] != len(rows):
                problems.append(f"seed {s} fold {m}: inner assignment length mismatch")
    return problems


def load_report(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_trials(path) -> list[dict]:
    return load_report(path)
