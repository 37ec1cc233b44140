import json

import pytest
from click.testing import CliRunner

from sgdk.cli import main


@pytest.fixture
def runner():
    return CliRunner()


SCALAR = {
    "dim": 1,
    "components": [
        {"Q": [[1.0]], "r": [0.0], "p": 0.5},
        {"Q": [[3.0]], "r": [0.0], "p": 0.5},
    ],
}


def test_gen_models_and_thresholds(runner, tmp_path):
    res = runner.invoke(main, ["gen-models", "--family", "qc", "--seed", "12345", "--out", str(tmp_path / "m")])
    assert res.exit_code == 0, res.output
    files = sorted((tmp_path / "m").glob("*.json"))
    assert [f.name for f in files] == ["qc-1.json", "qc-2.json", "qc-3.json", "qc-4.json"]

    res = runner.invoke(
        main,
        ["thresholds", "--model", str(files[0]), "--k", "1,inf", "--samples", "200", "--out", str(tmp_path / "t.csv")],
    )
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "t.csv").read_text().strip().splitlines()
    assert lines[0] == "model,minimizer,k,regime,conv_ub,div_lb,j,gamma,kmax_div,kmax_conv"
    assert len(lines) == 5


def test_thresholds_quadratic_problem(runner, tmp_path):
    spec = tmp_path / "scalar.json"
    spec.write_text(json.dumps(SCALAR))
    res = runner.invoke(main, ["thresholds", "--model", str(spec), "--k", "1"])
    assert res.exit_code == 0, res.output
    assert "scalar,1,homogeneous,0.8,0.8," in res.output


def test_plan_run_summarize_figures_flow(runner, tmp_path):
    model_dir = tmp_path / "models"
    res = runner.invoke(main, ["gen-models", "--family", "qc", "--seed", "3", "--out", str(model_dir)])
    assert res.exit_code == 0, res.output

    plan_path = tmp_path / "plan.json"
    res = runner.invoke(
        main,
        ["make-plan", "--family", "qc", "--models", str(model_dir / "qc-1.json"), "--out", str(plan_path), "--runs", "4", "--iters", "5"],
    )
    assert res.exit_code == 0, res.output
    plan = json.loads(plan_path.read_text())
    assert plan["runs_per_cell"] == 4
    assert plan["models"] == [str(model_dir / "qc-1.json")]

    traj = tmp_path / "traj.csv"
    res = runner.invoke(main, ["run", "--plan", str(plan_path), "--out", str(traj)])
    assert res.exit_code == 0, res.output
    lines = traj.read_text().strip().splitlines()
    assert lines[0].startswith("model,method,k,rate,")
    # 2 methods x 2 inits x 6 rates = 24 cells, 4 runs x 6 points each
    assert len(lines) == 1 + 24 * 4 * 6

    summary = tmp_path / "summary.csv"
    res = runner.invoke(main, ["summarize", "--in", str(traj), "--out", str(summary), "--json", str(tmp_path / "s.json")])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "s.json").exists()
    assert summary.read_text().splitlines()[0].startswith("model,method,k,rate")

    figs = tmp_path / "figs"
    res = runner.invoke(main, ["figure-data", "--in", str(traj), "--out", str(figs)])
    assert res.exit_code == 0, res.output
    assert len(list(figs.glob("*.csv"))) == 24


def test_verify_single_criterion(runner, tmp_path):
    report = tmp_path / "report.json"
    res = runner.invoke(main, ["verify", "--criteria", "2", "--json", str(report)])
    assert res.exit_code == 0, res.output
    assert "[PASS]  2" in res.output
    assert "all checks passed" in res.output
    data = json.loads(report.read_text())
    assert data["all_passed"] is True


def test_verify_exit_code_on_failure(runner, monkeypatch):
    from sgdk import acceptance

    def broken():
        raise AssertionError("forced")

    monkeypatch.setattr(acceptance, "CHECKS", [(1, "forced failure", broken)])
    res = runner.invoke(main, ["verify", "--criteria", "1"])
    assert res.exit_code == 1
    assert "[FAIL]" in res.output
