import csv
import json

import pytest

from ptopple import cli, verify
from ptopple.stats import TestReport


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_trivial(tmp_path, capsys):
    assert run("simulate", "--n", 1, "--p", 0.5, "--trials", 10, "--seed", 7, "--out", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "trials.csv").open()))
    assert len(rows) == 10 and all(r["K"] == "0" and r["hole"] == "" for r in rows)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["header"]["config"]["seed"] == 7
    assert summary["header"]["batch"]["n"] == 1


def test_simulate_is_byte_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--n", 20, "--p", "2/5", "--trials", 200, "--seed", 3,
                   "--workers", 1, "--out", tmp_path / d) == 0
    for f in ("trials.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "3")
    run("simulate", "--n", 9, "--p", 0.5, "--trials", 20, "--workers", 1, "--out", tmp_path / "env")
    run("simulate", "--n", 9, "--p", 0.5, "--trials", 20, "--workers", 1, "--seed", 3, "--out", tmp_path / "flag")
    run("simulate", "--n", 9, "--p", 0.5, "--trials", 20, "--workers", 1, "--seed", 4, "--out", tmp_path / "other")
    env, flag, other = ((tmp_path / d / "trials.csv").read_bytes() for d in ("env", "flag", "other"))
    assert env == flag != other
    monkeypatch.setenv(cli.SEED_ENV, "abc")
    assert run("simulate", "--n", 2, "--p", 0.5, "--out", tmp_path / "x") == cli.EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["simulate", "--n", "0", "--p", "0.5"],
    ["simulate", "--n", "3", "--p", "1"],
    ["simulate", "--n", "3", "--p", "0.5", "--trials", "0"],
    ["simulate", "--n", "3", "--p", "0.5", "--policy", "diagonal"],
    ["verify", "nonsense"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(argv)
    assert err.value.code == cli.EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_oracle_examples(tmp_path):
    out = tmp_path / "o.json"
    assert run("oracle", "--n", 2, "--p", "1/2", "--out", out) == 0
    body = json.loads(out.read_text())
    assert [e["probability"] for e in body["lrh"]] == [["1", "3"]] * 3
    assert body["expected_topplings"] == ["4", "3"]
    assert body["header"]["config"]["p"] == "1/2"
    assert run("oracle", "--n", 1, "--p", "1/3", "--out", out) == 0
    assert json.loads(out.read_text())["lrh"] == [{"L": 0, "R": 0, "hole": None, "probability": ["1", "1"]}]


def test_oracle_requires_rational_and_small_n(tmp_path):
    assert run("oracle", "--n", 2, "--p", "0.5") == cli.EXIT_USAGE
    assert run("oracle", "--n", 9, "--p", "1/2") == cli.EXIT_LIMIT


def test_oracle_crosscheck(tmp_path):
    out = tmp_path / "o.json"
    assert run("oracle", "--n", 3, "--p", "1/2", "--crosscheck", 20000, "--seed", 2, "--out", out) == 0
    reports = json.loads(out.read_text())["crosscheck"]
    assert reports[0]["name"].startswith("tv") and reports[0]["pass"]


def test_verify_bundle(tmp_path):
    out = tmp_path / "v.json"
    assert run("verify", "structure", "--n", 5, "--p", 0.5, "--trials", 500, "--out", out) == 0
    body = json.loads(out.read_text())
    assert body["pass"] and body["reports"][0]["statistic"] == 0


def test_verify_failure_exit_code(monkeypatch):
    monkeypatch.setattr(verify, "run_check", lambda *a, **k: [TestReport("x", 1, 0, False, 1)])
    assert run("verify", "abelian") == cli.EXIT_FAILURE


def test_plotdata_normalisation(tmp_path):
    out = tmp_path / "plot.csv"
    assert run("plotdata", "--n", 50, "--p", 0.5, "--trials", 300, "--seed", 1, "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["bin_center", "empirical_density", "theoretical_density"]
    assert len(rows) == 61
    centers = [float(r["bin_center"]) for r in rows]
    width = centers[1] - centers[0]
    assert sum(float(r["empirical_density"]) for r in rows) * width == pytest.approx(1.0, abs=1e-9)
    assert any(float(r["empirical_density"]) == 0 for r in rows)
    mid = rows[30]
    assert float(mid["bin_center"]) == pytest.approx(0.0, abs=1e-12)
    assert float(mid["theoretical_density"]) == pytest.approx(1.9544, abs=1e-4)
    assert json.loads((tmp_path / "plot.csv.json").read_text())["header"]["command"] == "plotdata"


def test_plotdata_from_summary(tmp_path):
    run("simulate", "--n", 30, "--p", 0.3, "--trials", 100, "--format", "json", "--out", tmp_path)
    assert not (tmp_path / "trials.csv").exists()
    assert run("plotdata", "--summary", tmp_path / "summary.json", "--out", tmp_path / "p.csv") == 0
    assert run("plotdata", "--summary", tmp_path / "missing.json") == cli.EXIT_USAGE
