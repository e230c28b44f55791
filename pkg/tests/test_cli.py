import json

import pytest

from pathindep import cli


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    return cli.main(args + ["--out", str(out)]), out


def test_list_models(capsys):
    assert cli.main(["list-models"]) == 0
    assert capsys.readouterr().out.split() == [
        "gruschin", "kohn", "kohn_corrected", "degenerate_exp",
        "heat_kernel", "two_exponential", "manufactured_jump", "pure_jump",
    ]


def test_run_identity_heat_kernel(tmp_path, capsys):
    code, out = run(["run-identity"], tmp_path)
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["result"]["statistics"]["max"] <= 1e-10
    assert summary["config"]["model"]["name"] == "heat_kernel"
    assert summary["seed"] == 0
    assert (out / "paths.csv").exists() and (out / "run.log").exists()
    assert "identity: PASS" in capsys.readouterr().out


def test_check_residuals_gruschin_fails(tmp_path, capsys):
    code, out = run(["check-residuals", "--set", "model.name=gruschin", "--set", "field.name=two_exponential",
                     "--set", "domain.x=[[0.5,2,4],[0.5,2,4]]"], tmp_path)
    assert code == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["residuals"]["worst_point"]["magnitude"] > 0
    assert "worst point" in capsys.readouterr().out


def test_check_residuals_kohn(tmp_path):
    code, out = run(["check-residuals", "--set", "model.name=kohn", "--set", "field.name=quadratic",
                     "--set", "domain.t=[1]", "--set", "domain.x=[[1],[2],[3]]"], tmp_path)
    assert code == 1
    assert json.loads((out / "summary.json").read_text())["drift_image_residual_sup"] == 1.5


def test_pide_residuals_pass(tmp_path):
    code, out = run(["check-residuals", "--set", "model.name=manufactured_jump"], tmp_path)
    assert code == 0
    assert "r_lambda_1" in (out / "residuals.csv").read_text().splitlines()[0]


def test_ftransform_residuals(tmp_path):
    code, _ = run(["check-residuals", "--set", "model.name=two_exponential", "--set", 'transform={"name": "identity"}'], tmp_path)
    assert code == 0


def test_numeric_point_failures_write_diagnostics(tmp_path):
    code, out = run(["check-residuals", "--set", "model.name=manufactured_jump", "--set", "field.name=linear",
                     "--set", 'field.params={"a": [-800.0]}'], tmp_path)
    assert code == 1
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["failed_points"] and "NumericError" in diag["failed_points"][0]["error"]


def test_curl_check(tmp_path):
    code, out = run(["curl-check", "--set", "model.name=gruschin", "--set", "domain.t=[1]", "--set", "domain.x=[[2],[3]]"], tmp_path)
    assert code == 1
    assert abs(json.loads((out / "summary.json").read_text())["curl"]["sup_defect"] - 0.75) <= 1e-6
    code, _ = run(["curl-check", "--set", "model.name=two_exponential"], tmp_path, "b")
    assert code == 0
    code, _ = run(["curl-check", "--set", "model.name=manufactured_jump"], tmp_path, "c")
    assert code == 0


def test_probe_hypotheses(tmp_path):
    code, out = run(["probe-hypotheses", "--set", "model.name=pure_jump"], tmp_path)
    assert code == 0
    probe = json.loads((out / "summary.json").read_text())["probe"]
    assert probe["verdicts"]["Hf"] == "pass"


def test_martingale_and_artifacts(tmp_path):
    code, out = run(["run-martingale", "--set", "model.name=manufactured_jump", "--set", "monte_carlo.paths=2000",
                     "--set", "output.ledger_path=3", "--set", "output.trace_path=3"], tmp_path)
    assert code == 0
    assert (out / "ledger.csv").read_text().startswith("t,stoch_integral,quad_term,jump_log_term,compensator_term,Y,Z\n")
    assert (out / "trace.csv").exists() and (out / "jumps.csv").exists()


def test_convergence_diverge(tmp_path):
    code, out = run(["run-convergence", "--set", "model.name=gruschin", "--set", "field.name=two_exponential",
                     "--set", "convergence.levels=[64,256]", "--set", "convergence.expect=diverge"], tmp_path)
    assert code == 0
    assert (out / "convergence.csv").read_text().startswith("steps,dt,median_error,max_error,slope\n")


def test_config_file_and_seed(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": {"name": "pure_jump"}, "grid": {"steps": 4}, "monte_carlo": {"paths": 10}}))
    code, out = run(["run-identity", "--config", str(path), "--seed", "7"], tmp_path)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["seed"] == 7 and s["config"]["grid"]["steps"] == 4


@pytest.mark.parametrize("args,key", [
    (["--set", "grid.Tx=1"], "grid"),
    (["--set", "grid.steps=0"], "grid.steps"),
    (["--set", "monte_carlo.paths=\"many\""], "monte_carlo.paths"),
    (["--set", "bogus=1"], "<root>"),
    (["--set", "tolerances.slope_range=[1]"], "tolerances.slope_range"),
])
def test_config_errors(tmp_path, capsys, args, key):
    code, _ = run(["run-identity"] + args, tmp_path)
    assert code == 2
    assert f"at {key}" in capsys.readouterr().err


def test_semantic_config_errors(tmp_path, capsys):
    assert run(["run-identity", "--set", "model.name=nope"], tmp_path)[0] == 2
    assert run(["run-identity", "--set", "model.name=gruschin"], tmp_path)[0] == 2
    assert "field.name" in capsys.readouterr().err
    assert run(["run-identity", "--config", str(tmp_path / "missing.json")], tmp_path)[0] == 2
    assert run(["run-identity", "--set", "nokeyvalue"], tmp_path)[0] == 2


def test_override_parsing():
    cfg = {}
    cli.apply_override(cfg, "a.b=3")
    cli.apply_override(cfg, "a.c=[1, 2]")
    cli.apply_override(cfg, "d=hello")
    assert cfg == {"a": {"b": 3, "c": [1, 2]}, "d": "hello"}


def test_byte_identical_reruns(tmp_path):
    args = ["run-identity", "--set", "model.name=manufactured_jump", "--set", "monte_carlo.paths=600"]
    assert run(args + ["--workers", "1"], tmp_path, "a")[0] == 0
    assert run(args + ["--workers", "3"], tmp_path, "b")[0] == 0
    for f in ("summary.json", "paths.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
