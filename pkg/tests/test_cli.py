import json
import subprocess
import sys

import pytest

from treetune import __version__
from treetune.cli import main, parse_seeds, CliError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    out = tmp_path_factory.mktemp("res")
    code = main(["tune", "builtin:monks-2", "cart", "rs,ga", "--budget", "12", "--seeds", "1..2",
                 "--outer-k", "3", "--jobs", "1", "--out", str(out)])
    assert code == 0
    return out


def test_parse_seeds():
    assert parse_seeds("1..3,7") == (1, 2, 3, 7)
    with pytest.raises(CliError):
        parse_seeds("a..b")


def test_tune_layout(results):
    base = results / "monks-2" / "cart"
    rows = [json.loads(line) for line in (base / "report.jsonl").read_text().splitlines()]
    assert len(rows) == 3 * 2 * 3
    assert {r["technique"] for r in rows} == {"defaults", "rs", "ga"}
    assert (base / "rs" / "seed2" / "trials.jsonl").exists()
    assert (base / "plan.json").exists() and (base / "space.json").exists()


def test_tune_refuses_to_overwrite(results, capsys):
    code, _, err = run(capsys, "tune", "builtin:monks-2", "cart", "rs,ga", "--budget", "12", "--seeds", "1..2",
                       "--outer-k", "3", "--jobs", "1", "--out", str(results))
    assert code == 5 and "--force" in err


def test_tune_config_errors(tmp_path, capsys):
    assert run(capsys, "tune", "builtin:monks-2", "cart", "bo", "--out", str(tmp_path))[0] == 2
    code, _, err = run(capsys, "tune", "builtin:monks-2", "cart", "rs", "--budget", "5", "--out", str(tmp_path))
    assert code == 2 and "budget below initial population" in err
    assert run(capsys, "tune", "builtin:monks-2", "c50", "rs")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_tune_data_error(tmp_path, capsys):
    code, _, err = run(capsys, "tune", str(tmp_path / "nope.csv"), "cart", "rs", "--out", str(tmp_path))
    assert code == 3 and "data" in err


def test_tune_with_plan_file(tmp_path, capsys):
    plan = {"dataset": "builtin:monks-1", "learner": "j48", "techniques": ["rs"], "outer_k": 2,
            "budget": 10, "seeds": [4], "include_defaults": False}
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    code, out, _ = run(capsys, "--json", "tune", "x", "j48", "rs", "--plan", str(tmp_path / "plan.json"),
                       "--out", str(tmp_path / "o"), "--jobs", "1")
    assert code == 0
    assert json.loads(out)["rows"] == 2


def test_compare(results, tmp_path, capsys):
    report = results / "monks-2" / "cart" / "report.jsonl"
    code, out, _ = run(capsys, "--json", "compare", str(report), "--output", str(tmp_path / "cmp.json"))
    assert code == 0
    doc = json.loads(out)
    assert {w["technique"] for w in doc["wilcoxon"]} == {"rs", "ga"}
    assert "mean_ranks" in doc
    assert json.loads((tmp_path / "cmp.json").read_text()) == doc
    assert run(capsys, "compare", str(report), "--output", str(tmp_path / "cmp.json"))[0] == 5


def test_importance(results, capsys):
    trials = results / "monks-2" / "cart" / "rs" / "seed1" / "trials.jsonl"
    code, out, _ = run(capsys, "--json", "importance", str(trials), "--trees", "10")
    assert code == 0
    doc = json.loads(out)
    assert doc["filter"] == 0.005
    assert all(r["fraction"] >= 0.005 for r in doc["rows"])


def test_importance_missing_space(tmp_path, capsys):
    f = tmp_path / "trials.jsonl"
    f.write_text("")
    assert run(capsys, "importance", str(f))[0] == 2


def test_complexity(capsys):
    code, out, _ = run(capsys, "--json", "complexity", "builtin:balance-scale", "--learner", "cart")
    assert code == 0
    doc = json.loads(out)
    assert doc["profile"]["cls"] == 3
    assert [a["learner"] for a in doc["advice"]] == ["cart"]
    code, out, _ = run(capsys, "complexity", "builtin:monks-1")
    assert code == 0 and "j48" in out and "ctree" in out


def test_inspect(capsys):
    code, out, _ = run(capsys, "inspect", "builtin:monks-1", "cart", "--param", "cp=0.001", "--param", "minsplit=2")
    assert code == 0 and "nodes" in out
    code, out, _ = run(capsys, "--json", "inspect", "builtin:monks-1", "j48", "--param", "B=true")
    assert code == 0 and json.loads(out)["learner"] == "j48"
    assert run(capsys, "inspect", "builtin:monks-1", "cart", "--param", "cp=2")[0] == 2
    assert run(capsys, "inspect", "builtin:monks-1", "cart", "--param", "nope=1")[0] == 2


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "treetune.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
