import json
import math
import subprocess
import sys

import numpy as np
import pytest

from tobitinf.cli import load_csv, main
from tobitinf.errors import InvariantViolation, ParseError


def write(path, text):
    path.write_text(text)
    return path


def run(argv, capsys):
    status = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return status, out, err


@pytest.fixture
def tobit1_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 80
    X = rng.normal(size=(n, 2))
    y = np.maximum(0, X @ [1.0, -0.5] + rng.normal(size=n))
    lines = ["y,x1,x2"] + [f"{float(y[i])!r},{float(X[i, 0])!r},{float(X[i, 1])!r}" for i in range(n)]
    return write(tmp_path / "d.csv", "\n".join(lines) + "\n")


class TestLoadCsv:
    def test_small_file(self, tmp_path):
        p = write(tmp_path / "a.csv", "y,x1,x2\n0,1,2\n1.5,1,0\n0,1,-1\n2,1,3\n0.1,1,1\n")
        data, summary = load_csv(p, "tobit1")
        assert summary["n_rows"] == 5 and summary["n_censored"] == 2
        assert data.X.shape == (5, 2)

    def test_negative_y(self, tmp_path):
        p = write(tmp_path / "a.csv", "y,x1\n0,1\n-1,2\n")
        with pytest.raises(InvariantViolation):
            load_csv(p, "tobit1")

    def test_missing_column(self, tmp_path):
        p = write(tmp_path / "a.csv", "x1,x2\n0,1\n")
        with pytest.raises(ParseError, match="'y'"):
            load_csv(p, "tobit1")

    def test_bad_cell_reports_row_and_column(self, tmp_path):
        p = write(tmp_path / "a.csv", "y,x1\n0,1\n1,abc\n")
        with pytest.raises(ParseError, match=r"row 1 .*'x1'"):
            load_csv(p, "tobit1")

    def test_ragged_row(self, tmp_path):
        p = write(tmp_path / "a.csv", "y,x1\n0,1,3\n")
        with pytest.raises(ParseError):
            load_csv(p, "tobit1")

    def test_type3_invariant(self, tmp_path):
        rows = ["y1,y2,x1_1,x2_1"] + ["1,1,1,1"] * 17 + ["0,0.5,1,1"]
        p = write(tmp_path / "a.csv", "\n".join(rows) + "\n")
        with pytest.raises(InvariantViolation, match="y1 zero but y2 nonzero at row 17"):
            load_csv(p, "tobit3")

    def test_type2_missing_outcomes(self, tmp_path):
        p = write(tmp_path / "a.csv", "z,y2,x1_1,x2_1\n1,0.5,1,2\n0,,1,1\n0,NA,2,2\n")
        data, summary = load_csv(p, "tobit2")
        assert summary["n_censored"] == 2
        p = write(tmp_path / "b.csv", "z,y2,x1_1,x2_1\n1,,1,2\n")
        with pytest.raises(InvariantViolation):
            load_csv(p, "tobit2")

    def test_aft(self, tmp_path):
        p = write(tmp_path / "a.csv", "t,T,x1\n1,2,0.5\n2,2,1\n")
        data, summary = load_csv(p, "aft")
        np.testing.assert_allclose(data.y, [math.log(2), 0.0])
        assert summary["n_censored"] == 1


def test_fit_then_infer_round_trip(tobit1_csv, tmp_path, capsys):
    fit_path = tmp_path / "fit.json"
    assert run(["fit", "--model", "tobit1", "-i", tobit1_csv, "-o", fit_path], capsys)[0] == 0
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["infer", "--model", "tobit1", "-i", tobit1_csv, "--fit", fit_path, "-o", a], capsys)[0] == 0
    assert run(["infer", "--model", "tobit1", "-i", tobit1_csv, "-o", b], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rec = json.loads(a.read_text())
    assert rec["variance"]["source"] == "plug-in"
    c = rec["coefficients"][0]
    assert {"two_step_estimate", "corrected", "naive", "v_minus", "v_plus"} <= set(c)
    assert {"lower", "upper", "p_value", "pivot"} <= set(c["corrected"])


def test_known_sigma_label(tobit1_csv, capsys):
    status, out, _ = run(["infer", "--model", "tobit1", "-i", tobit1_csv, "--sigma", "1"], capsys)
    assert status == 0
    assert json.loads(out)["variance"] == {"source": "known", "sigma2": 1.0}


def test_no_binding_truncation_gives_naive(tmp_path, capsys):
    # every unit uncensored and far from zero: truncation bounds sit far away
    rng = np.random.default_rng(1)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = 50 + X[:, 1] + 0.1 * rng.normal(size=n)
    y[::4] = 0.0  # censoring unrelated to X keeps the probit step well posed
    lines = ["y,x1,x2"] + [f"{float(y[i])!r},{float(X[i, 0])!r},{float(X[i, 1])!r}" for i in range(n)]
    p = write(tmp_path / "far.csv", "\n".join(lines) + "\n")
    status, out, err = run(["infer", "--model", "tobit1", "-i", p, "--sigma", "0.1"], capsys)
    assert status == 0, err
    for c in json.loads(out)["coefficients"]:
        assert c["corrected"]["lower"] == pytest.approx(c["naive"]["lower"], abs=1e-6)
        assert c["corrected"]["upper"] == pytest.approx(c["naive"]["upper"], abs=1e-6)


def test_tobit3_and_tobit2(tmp_path, capsys):
    for model in ("tobit3", "tobit2"):
        csv_path = tmp_path / f"{model}.csv"
        status, _, err = run(["simulate", "--model", model, "--n", 150, "--p", 2, "--sigma12", 0.4, "--csv", csv_path], capsys)
        assert status == 0, err
        args = ["infer", "--model", model, "-i", csv_path]
        if model == "tobit2":
            args += ["--B", 100]
        status, out, err = run(args, capsys)
        assert status == 0, err
        rec = json.loads(out)
        if model == "tobit2":
            assert "bootstrap" in rec["coefficients"][0]
            assert len(rec["coefficients"]) == 2
        else:
            names = [c["coefficient"] for c in rec["coefficients"]]
            assert names == ["beta1[0]", "beta1[1]", "beta2[0]", "beta2[1]"]


def test_tobit3_partial_known_variances_is_usage_error(tmp_path, capsys):
    csv_path = tmp_path / "t3.csv"
    run(["simulate", "--model", "tobit3", "--n", 100, "--p", 2, "--csv", csv_path], capsys)
    status, _, err = run(["infer", "--model", "tobit3", "-i", csv_path, "--sigma", 1], capsys)
    assert status == 2
    assert json.loads(err)["error"]["code"] == "usage_error"


def test_deterministic_outputs(tmp_path, capsys, monkeypatch):
    outs = []
    for k in range(2):
        path = tmp_path / f"cov{k}.json"
        status, _, _ = run(["coverage", "--model", "tobit1", "--n", 40, "--p", 3, "--replications", 15, "-o", path, "--csv", tmp_path / f"cov{k}.csv"], capsys)
        assert status == 0
        outs.append((path.read_bytes(), (tmp_path / f"cov{k}.csv").read_bytes()))
    assert outs[0] == outs[1]
    monkeypatch.setenv("TOBITINF_SEED", "3")
    _, a, _ = run(["simulate", "--model", "tobit1", "--n", 20, "--p", 2], capsys)
    _, b, _ = run(["simulate", "--model", "tobit1", "--n", 20, "--p", 2, "--seed", 3], capsys)
    assert a == b
    assert json.loads(a)["design"]["seed"] == 3


def test_validate_pivot(capsys):
    status, out, _ = run(["validate-pivot", "--n", 50, "--p", 3, "--count", 500], capsys)
    assert status == 0
    rec = json.loads(out)
    assert {"statistic", "critical_value", "passed"} <= set(rec)


def test_width_curve(tmp_path, capsys):
    status, out, _ = run(["width-curve", "--truncation", "lower", "--points", 11, "--csv", tmp_path / "w.csv"], capsys)
    assert status == 0
    assert len(json.loads(out)["rows"]) == 11
    assert (tmp_path / "w.csv").read_text().startswith("x_over_sigma,")


def test_error_exit_codes(tmp_path, capsys):
    status, _, err = run(["fit", "--model", "tobit1", "-i", tmp_path / "missing.csv"], capsys)
    assert status == 3
    assert json.loads(err)["error"]["code"] == "parse_error"
    p = write(tmp_path / "neg.csv", "y,x1\n0,1\n-2,1\n")
    status, _, err = run(["fit", "--model", "tobit1", "-i", p], capsys)
    assert status == 3 and json.loads(err)["error"]["code"] == "invariant_violation"
    sep = write(tmp_path / "sep.csv", "y,x1\n0,-2\n0,-1\n1,1\n2,2\n0,-3\n3,3\n")
    status, _, err = run(["fit", "--model", "tobit1", "-i", sep], capsys)
    assert status == 4 and json.loads(err)["error"]["type"] == "Separation"


def test_usage_errors_exit_2(tobit1_csv):
    r = subprocess.run([sys.executable, "-m", "tobitinf", "infer", "--model", "tobit9", "-i", str(tobit1_csv)], capture_output=True)
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "tobitinf", "infer", "--model", "tobit1", "-i", str(tobit1_csv), "--alpha", "1.5"], capture_output=True)
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "tobitinf", "fit", "--model", "tobit1", "-i", str(tobit1_csv)], capture_output=True)
    assert r.returncode == 0 and json.loads(r.stdout)["model"] == "tobit1"


def test_fit_file_model_mismatch(tobit1_csv, tmp_path, capsys):
    fit_path = tmp_path / "fit.json"
    run(["fit", "--model", "tobit1", "-i", tobit1_csv, "-o", fit_path], capsys)
    status, _, _ = run(["infer", "--model", "aft", "-i", tobit1_csv, "--fit", fit_path], capsys)
    assert status in (2, 3)
