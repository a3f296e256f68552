"""Command-line interface: ``treetune {tune,compare,importance,complexity,inspect}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
failure, 5 output already present (rerun with ``--force``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .complexity import ComplexityError, advise, profile
from .data import DataError, load_source
from .harness import DEFAULTS, ExperimentPlan, PlanError, load_report, load_trials, run_experiment, _safe
from .importance import ImportanceError, importance
from .space import ParamSpace, SpaceError, builtin_space
from .stats import StatsError, compare_reports
from .trees import fit
from .tuners import TECHNIQUES, TunerError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME, EXIT_EXISTS = 0, 2, 3, 4, 5

log = logging.getLogger("treetune")


class CliError(Exception):
    def __init__(self, code: int, component: str, message: str):
        super().__init__(message)
        self.code = code
        self.component = component


def parse_seeds(text: str) -> tuple[int, ...]:
    """``'1..5'``, ``'1,3,7'`` or a mix such as ``'1..3,10'``."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                seeds.extend(range(int(a), int(b) + 1))
            elif part:
                seeds.append(int(part))
    except ValueError:
        raise CliError(EXIT_CONFIG, "cli", f"cannot parse seeds {text!r}") from None
    if not seeds:
        raise CliError(EXIT_CONFIG, "cli", "no seeds given")
    return tuple(seeds)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_CONFIG, "cli", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="treetune", description="Hyperparameter tuning experiments for decision trees.")
    p.add_argument("--version", action="version", version=f"treetune {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("tune", help="run a nested cross-validation tuning experiment")
    t.add_argument("dataset", help="openml:<id>, builtin:<name>, or a .csv/.arff path")
    t.add_argument("learner", choices=["j48", "cart", "ctree"])
    t.add_argument("technique", help="comma list of " + ", ".join([*TECHNIQUES, DEFAULTS]))
    t.add_argument("--budget", type=int, default=900)
    t.add_argument("--seeds", default="1..5")
    t.add_argument("--outer-k", type=int, default=10)
    t.add_argument("--inner-k", type=int, default=3)
    t.add_argument("--instances", type=int, default=100, help="racing instance pool size")
    t.add_argument("--no-defaults", action="store_true", help="omit the defaults arm")
    t.add_argument("--plan", help="JSON plan file; overrides the flags above")
    t.add_argument("--out", default="results")
    t.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    t.add_argument("--force", action="store_true")

    c = sub.add_parser("compare", help="statistical comparison of report files")
    c.add_argument("reports", nargs="+")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--cd-alpha", type=float, default=0.1)
    c.add_argument("--baseline", default=DEFAULTS)
    c.add_argument("--output")
    c.add_argument("--force", action="store_true")

    i = sub.add_parser("importance", help="hyperparameter importance from trial logs")
    i.add_argument("trials", nargs="+", help="trials.jsonl files")
    i.add_argument("--space", help="space.json (default: found beside the report)")
    i.add_argument("--order", type=int, default=2)
    i.add_argument("--filter", type=float, default=0.005)
    i.add_argument("--trees", type=int, default=100)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--output")
    i.add_argument("--force", action="store_true")

    x = sub.add_parser("complexity", help="data-complexity profile and tuning advice")
    x.add_argument("dataset")
    x.add_argument("--learner", choices=["j48", "cart", "ctree"], action="append")
    x.add_argument("--output")
    x.add_argument("--force", action="store_true")

    n = sub.add_parser("inspect", help="fit one tree on a whole dataset and print it")
    n.add_argument("dataset")
    n.add_argument("learner", choices=["j48", "cart", "ctree"])
    n.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="hyperparameter override; repeatable")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--output")
    n.add_argument("--force", action="store_true")
    return p


def _emit(args, payload, human: str) -> None:
    text = json.dumps(payload, indent=None if args.json else 2) if args.json else human
    if getattr(args, "output", None):
        Path(args.output).write_text(json.dumps(payload, indent=2) + "\n")
    print(text)


def _check_output(args) -> None:
    out = getattr(args, "output", None)
    if out and Path(out).exists() and not args.force:
        raise CliError(EXIT_EXISTS, "cli", f"{out} exists; use --force to overwrite")


def _load(ref):
    try:
        return load_source(ref)
    except DataError as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from None


# -- commands ---------------------------------------------------------------

def cmd_tune(args) -> int:
    if args.plan:
        try:
            plan = ExperimentPlan.from_dict(json.loads(Path(args.plan).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_CONFIG, "harness", f"cannot read plan: {exc}") from None
    else:
        techs = tuple(t.strip() for t in args.technique.split(",") if t.strip())
        for t in techs:
            if t not in TECHNIQUES and t != DEFAULTS:
                raise CliError(EXIT_CONFIG, "tuners", f"unknown technique {t!r}")
        search = tuple(t for t in techs if t != DEFAULTS)
        if search and args.budget < min(TECHNIQUES[t].min_budget for t in search):
            raise CliError(EXIT_CONFIG, "tuners", f"budget below initial population ({args.budget} < 10)")
        plan = ExperimentPlan(args.dataset, args.learner, search, args.outer_k, args.inner_k, args.budget,
                              parse_seeds(args.seeds), args.instances,
                              include_defaults=not args.no_defaults or DEFAULTS in techs)
    data = _load(plan.dataset)
    base = Path(args.out) / _safe(data.name) / plan.learner
    if (base / "report.jsonl").exists():
        if not args.force:
            raise CliError(EXIT_EXISTS, "harness", f"{base} already holds results; use --force")
        shutil.rmtree(base)

    def progress(row):
        log.info("%s seed %d fold %d: BAC %.4f (%d evaluations)", row.technique, row.seed, row.fold,
                 row.bac, row.n_evaluations)

    try:
        report = run_experiment(plan, data, out=args.out, jobs=max(1, args.jobs), progress=progress)
    except DataError as exc:
        raise CliError(EXIT_DATA, "data", str(exc)) from None
    except (TunerError, SpaceError) as exc:
        raise CliError(EXIT_CONFIG, "tuners", str(exc)) from None
    summary = {a: sum(r.bac for r in report.select(a)) / max(1, len(report.select(a))) for a in plan.arms}
    payload = {"out": str(base), "rows": len(report.rows), "mean_bac": summary}
    human = f"wrote {len(report.rows)} report rows to {base}\n" + "\n".join(
        f"  {a:10s} mean BAC {v:.4f}" for a, v in summary.items())
    _emit(args, payload, human)
    return EXIT_OK


def cmd_compare(args) -> int:
    _check_output(args)
    rows = []
    for path in args.reports:
        try:
            rows.extend(load_report(path))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_DATA, "stats", f"cannot read report {path}: {exc}") from None
    result = compare_reports(rows, args.baseline, args.alpha, args.cd_alpha)
    lines = []
    for w in result["wilcoxon"]:
        lines.append(f"{w['dataset']:24s} {w['technique']:8s} {w['mean']:.4f} vs {w['baseline_mean']:.4f}"
                     f"  p={w['p']:.4g}  {w['verdict']}")
    if "mean_ranks" in result:
        lines.append("mean ranks: " + ", ".join(f"{t}={r:.3f}" for t, r in result["mean_ranks"].items()))
    if "friedman" in result:
        f = result["friedman"]
        lines.append(f"Friedman chi2={f['statistic']:.4f} p={f['p']:.4g} reject={f['reject']}")
    if "cd" in result:
        lines.append(f"critical difference {result['cd']:.4f}")
    _emit(args, result, "\n".join(lines))
    return EXIT_OK


def _find_space(trials_path: Path) -> Path | None:
    for parent in list(trials_path.parents)[:4]:
        if (parent / "space.json").exists():
            return parent / "space.json"
    return None


def cmd_importance(args) -> int:
    _check_output(args)
    groups: dict[str, tuple[ParamSpace, list]] = {}
    for path in args.trials:
        path = Path(path)
        space_path = Path(args.space) if args.space else _find_space(path)
        if space_path is None:
            raise CliError(EXIT_CONFIG, "importance", f"no space.json found for {path}; pass --space")
        try:
            space = ParamSpace.from_json(space_path.read_text())
            recs = load_trials(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_DATA, "importance", f"cannot read {path}: {exc}") from None
        name = space_path.parent.parent.name if not args.space else path.stem
        groups.setdefault(name, (space, []))[1].extend(recs)
    rows, lines = [], []
    for name, (space, recs) in groups.items():
        try:
            rep = importance(recs, space, args.trees, args.seed, args.order, args.filter)
        except ImportanceError as exc:
            raise CliError(EXIT_DATA, "importance", f"{name}: {exc}") from None
        for rec in rep.to_records(include_filtered=False):
            rows.append({"dataset": name, "subset": rec["subset"], "fraction": rec["fraction"]})
            lines.append(f"{name:24s} {'+'.join(rec['subset']):32s} {rec['fraction']:.4f}")
    _emit(args, {"rows": rows, "filter": args.filter}, "\n".join(lines) or "(no subset above the filter)")
    return EXIT_OK


def cmd_complexity(args) -> int:
    _check_output(args)
    data = _load(args.dataset)
    try:
        prof = profile(data)
    except ComplexityError as exc:
        raise CliError(EXIT_DATA, "complexity", str(exc)) from None
    learners = args.learner or ["j48", "cart", "ctree"]
    advice = [advise(prof, lr).to_dict() for lr in learners]
    lines = [f"{k:4s} {v}" for k, v in prof.to_dict().items() if k != "flags"]
    lines += [f"note: {f}" for f in prof.flags]
    lines += [f"{a['learner']:6s} -> {a['verdict']} ({'; '.join(a['rules']) or 'no rule fired'})" for a in advice]
    _emit(args, {"dataset": data.name, "profile": prof.to_dict(), "advice": advice}, "\n".join(lines))
    return EXIT_OK


def _parse_params(space: ParamSpace, items) -> dict:
    given = {}
    for item in items:
        name, sep, text = item.partition("=")
        if not sep or name not in space.names:
            raise CliError(EXIT_CONFIG, "trees", f"bad --param {item!r}")
        try:
            value = json.loads(text.lower() if text.lower() in ("true", "false") else text)
        except json.JSONDecodeError:
            value = text
        try:
            given[name] = space.config_from_json({name: value})[name]
        except (TypeError, ValueError):
            raise CliError(EXIT_CONFIG, "trees", f"bad value for {name}: {text!r}") from None
    return given


def cmd_inspect(args) -> int:
    _check_output(args)
    data = _load(args.dataset)
    space = builtin_space(args.learner, data.n_features)
    params = _parse_params(space, args.param)
    try:
        model = fit(args.learner, data, params, rng=np.random.default_rng(args.seed))
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "trees", str(exc)) from None
    doc = model.to_dict()
    human = model.describe(list(data.feature_names), list(data.class_names))
    human += f"\n({model.n_nodes} nodes, depth {model.max_depth})"
    _emit(args, doc, human)
    return EXIT_OK


COMMANDS = {"tune": cmd_tune, "compare": cmd_compare, "importance": cmd_importance,
            "complexity": cmd_complexity, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"treetune: error [{exc.component}]: {exc}", file=sys.stderr)
        return exc.code
    except (PlanError, SpaceError, TunerError) as exc:
        print(f"treetune: error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"treetune: error [data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (StatsError, ComplexityError, ImportanceError) as exc:
        print(f"treetune: error [analysis]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"treetune: error [runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
