import json
import subprocess
import sys

import pytest

from ctrlshare import cli
from ctrlshare.mab import mab_model
from ctrlshare.model import random_model, save_model
from ctrlshare.suites import CheckResult


def run(argv, capsys):
    code = cli.run_cli(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_roots(capsys):
    code, out, _ = run(["roots", "--alpha", "1"], capsys)
    assert code == 0 and float(out) == pytest.approx(0.34727, abs=5e-5)
    assert len(out.strip().split(".")[1]) == 12
    code, out, _ = run(["roots", "--tau"], capsys)
    assert code == 0 and float(out) == pytest.approx(0.38196, abs=5e-5)


def test_roots_negative_index(capsys):
    assert run(["roots", "--alpha", "-1"], capsys)[0] == 64


def test_mab_both(capsys):
    code, out, err = run(["mab", "--p", "0.5", "--mode", "both"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["closed_form"]["gain"] == pytest.approx(0.75, abs=1e-5)
    assert doc["rvi"]["gain"] == pytest.approx(0.75, abs=1e-5)
    assert doc["gain_discrepancy"] < 1e-5
    assert "gain discrepancy" in err


def test_mab_rvi_asymmetric(capsys):
    code, out, _ = run(["mab", "--p", "0.3", "--p2", "0.6", "--mode", "rvi", "--nmax", "20"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["n_max"] == 20 and "residuals" not in doc
    assert set(doc) >= {"p", "gain", "values", "policy"}


def test_mab_closed_form_residuals(capsys):
    code, out, _ = run(["mab", "--p", "0.2", "--mode", "closed-form"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["max_residual"] < 1e-9 and "0" in doc["residuals"]


def test_mab_closed_form_needs_symmetry(capsys):
    code, _, err = run(["mab", "--p", "0.3", "--p2", "0.6", "--mode", "closed-form"], capsys)
    assert code == 64 and "symmetric" in err


@pytest.mark.parametrize("argv", [["mab"], ["mab", "--p", "2"], ["frobnicate"], ["roots", "--bogus"],
                                  ["solve", "--model", "x.json"], []])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 64 and "usage" in err


def test_verify_passes(capsys):
    code, out, _ = run(["verify", "--suite", "independence", "--seeds", "20"], capsys)
    assert code == 0 and out.count("PASS") == 4 and "FAIL" not in out


def test_verify_failure_exit_code(monkeypatch, capsys, tmp_path):
    monkeypatch.setattr(cli, "run_suite", lambda name, seeds: [CheckResult("forced", False, 1.0, 0.5, "<=")])
    code, out, _ = run(["verify", "--suite", "filter", "--out", str(tmp_path / "r.json")], capsys)
    assert code == 1 and "FAIL" in out
    assert json.loads((tmp_path / "r.json").read_text())["checks"][0]["passed"] is False


def test_solve_finite(tmp_path, capsys):
    path = tmp_path / "m.json"
    save_model(random_model(1, n=2, nz=2), path)
    code, out, _ = run(["solve", "--model", str(path), "--horizon", "2"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["criterion"] == "finite" and len(doc["policy"]["stages"]) == 2


def test_solve_average_and_simulate(tmp_path, capsys):
    model = tmp_path / "mab.json"
    save_model(mab_model(0.5), model)
    sol = tmp_path / "sol.json"
    code, _, _ = run(["solve", "--model", str(model), "--average", "--out", str(sol)], capsys)
    assert code == 0
    assert json.loads(sol.read_text())["gain"] == pytest.approx(0.75, abs=1e-6)
    code, out, _ = run(["simulate", "--model", str(model), "--policy", str(sol), "--steps", "20000",
                        "--seed", "3"], capsys)
    rep = json.loads(out)
    assert code == 0 and abs(rep["mean"] - 0.75) <= 3 * rep["stderr"]


def test_solve_discounted_needs_closure(tmp_path, capsys):
    path = tmp_path / "m.json"
    save_model(random_model(1, n=2, nz=2), path)
    code, _, err = run(["solve", "--model", str(path), "--discount", "0.9", "--max-points", "30"], capsys)
    assert code == 2 and "ClosureViolation" in err
    code, out, _ = run(["solve", "--model", str(path), "--discount", "0.9", "--max-points", "30", "--snap"],
                       capsys)
    assert code == 0 and json.loads(out)["criterion"] == "discounted"


def test_solve_blowup(tmp_path, capsys):
    path = tmp_path / "m.json"
    save_model(random_model(1, n=2, nz=2), path)
    code, _, err = run(["solve", "--model", str(path), "--horizon", "6", "--max-points", "10"], capsys)
    assert code == 2 and "CombinatorialBlowup" in err


def test_malformed_model(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "shared_size": 1,\n  oops\n}')
    code, _, err = run(["solve", "--model", str(path), "--horizon", "1"], capsys)
    assert code == 2 and "line 3" in err


def test_missing_model_file(tmp_path, capsys):
    code, _, err = run(["solve", "--model", str(tmp_path / "none.json"), "--horizon", "1"], capsys)
    assert code == 2


def test_invalid_model_field(tmp_path, capsys):
    path = tmp_path / "m.json"
    save_model(random_model(0), path)
    doc = json.loads(path.read_text())
    doc["initial_shared"] = [0.3]
    path.write_text(json.dumps(doc))
    code, _, err = run(["solve", "--model", str(path), "--horizon", "1"], capsys)
    assert code == 2 and "initial_shared" in err


def test_simulate_mab(capsys):
    code, out, _ = run(["simulate", "--mab-p", "0.2", "--policy", "closed-form", "--steps", "50000",
                        "--seed", "4"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["seed"] == 4 and rep["steps"] == 50000 and rep["batches"] == 100


def test_simulate_policy_file(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    assert run(["mab", "--p", "0.3", "--p2", "0.6", "--mode", "rvi", "--out", str(sol)], capsys)[0] == 0
    code, out, _ = run(["simulate", "--mab-p", "0.3", "--policy", str(sol), "--steps", "20000", "--seed", "1"],
                       capsys)
    assert code == 0 and json.loads(out)["policy_id"].startswith("mab-rvi")


def test_simulate_bad_policy_file(tmp_path, capsys):
    pol = tmp_path / "p.json"
    pol.write_text('{"something": 1}')
    code, _, _ = run(["simulate", "--mab-p", "0.3", "--policy", str(pol), "--steps", "10", "--seed", "1"], capsys)
    assert code == 2


def test_outputs_byte_stable(tmp_path, capsys):
    for cmd in (["mab", "--p", "0.2", "--mode", "both"],
                ["simulate", "--mab-p", "0.5", "--policy", "rvi", "--steps", "20000", "--seed", "8"]):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(cmd + ["--out", str(a)], capsys)[0] == 0
        assert run(cmd + ["--out", str(b)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ctrlshare", "roots", "--tau"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.381966011250"
    res = subprocess.run([sys.executable, "-m", "ctrlshare", "--nope"], capture_output=True, text=True)
    assert res.returncode == 64
