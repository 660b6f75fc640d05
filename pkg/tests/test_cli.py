import csv
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from nlcap.channel import ChannelParams, noiseless_output
from nlcap.cli import EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_VALIDATION, main

SWEEP_COLUMNS = "P_mW,snr,gamma_tilde,C0_nat,dC_nat,dC_prime_nat,C_total_nat,lower_bound_nat,u,v,flags"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestCapacitySweep:
    def test_csv_format(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        rc = main(["capacity-sweep", "--pmin", "0.1", "--pmax", "100", "--points", "15", "-o", str(out)])
        assert rc == EXIT_OK
        text = out.read_text()
        assert text.splitlines()[0] == SWEEP_COLUMNS
        assert text.endswith("\n")
        rows = _rows(out)
        P = [float(r["P_mW"]) for r in rows]
        assert P == sorted(P) and len(P) == 15
        for r in rows:
            assert float(r["dC_prime_nat"]) == float(r["dC_nat"]) - 1 / float(r["snr"])
        assert rows[3]["C0_nat"] == format(float(rows[3]["C0_nat"]), ".17g")
        ext = (tmp_path / "s.extrema.txt").read_text()
        assert ext.startswith("# gamma=") and "min dC_prime_nat=" in ext and "max dC_prime_nat=" in ext

    def test_byte_identical_runs(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["capacity-sweep", "--pmin", "0.05", "--pmax", "50", "--points", "11"]
        assert main(args + ["-o", str(a)]) == main(args + ["-o", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.extrema.txt").read_bytes() == (tmp_path / "b.extrema.txt").read_bytes()

    def test_linear_channel_zero_prime(self, tmp_path):
        out = tmp_path / "lin.csv"
        assert main(["capacity-sweep", "--gamma", "0", "--points", "20", "-o", str(out)]) == EXIT_OK
        assert all(abs(float(r["dC_prime_nat"])) <= 1e-15 for r in _rows(out))

    def test_out_of_region_tagging_and_strict(self, tmp_path):
        out = tmp_path / "r.csv"
        assert main(["capacity-sweep", "--points", "5", "-o", str(out)]) == EXIT_OK
        rows = _rows(out)
        assert "out_of_region" in rows[-1]["flags"] and "out_of_region" not in rows[0]["flags"]
        rc = main(["capacity-sweep", "--points", "5", "--strict-region", "-o", str(out)])
        assert rc == EXIT_CONFIG

    def test_json(self, tmp_path, capsys):
        out = tmp_path / "j.csv"
        main(["capacity-sweep", "--pmin", "0.1", "--pmax", "10", "--points", "5", "-o", str(out), "--json"])
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) >= {"params", "rows", "extrema", "csv", "failed"}
        assert set(doc["rows"][0]) == set(SWEEP_COLUMNS.split(","))

    def test_nonconvergence_exit_keeps_csv(self, tmp_path, monkeypatch):
        from nlcap import capacity as capmod
        from nlcap.errors import NonConvergence

        real = capmod.solve_leading

        def flaky(g, tol=None):
            if 0.5 < g < 1.0:
                raise NonConvergence("forced")
            return real(g, tol)

        monkeypatch.setattr(capmod, "solve_leading", flaky)
        out = tmp_path / "f.csv"
        rc = main(["capacity-sweep", "--pmin", "0.1", "--pmax", "10", "--points", "9", "-o", str(out)])
        assert rc == EXIT_NONCONVERGENCE
        rows = _rows(out)
        assert len(rows) == 9 and any("failed:NonConvergence" in r["flags"] for r in rows)


class TestPdfEval:
    def test_on_trajectory_and_linear(self, capsys):
        p = ChannelParams(1.3e-3, 1.5e-7, 1000.0)
        X = 1.0 + 0.5j
        Y = noiseless_output(X, p)
        assert main(["pdf-eval", "--X", str(X), "--Y", str(Y)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "x0,y0,mu,p0,dp1,dp2,total,flag"
        row = dict(zip(lines[0].split(","), lines[1].split(",")))
        assert abs(float(row["dp1"])) <= 1e-10 * float(row["p0"])

        assert main(["pdf-eval", "--gamma", "0", "--Q", "1e-3", "--L", "1", "--X", "1", "--Y", "1.02+0.01j"]) == 0
        line = capsys.readouterr().out.splitlines()[1].split(",")
        expected = math.exp(-(0.02**2 + 0.01**2) / 1e-3) / (math.pi * 1e-3)
        assert float(line[6]) == pytest.approx(expected, rel=1e-14)

    def test_zero_input_row(self, capsys):
        assert main(["pdf-eval", "--X", "0,1", "--Y", "1,1"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].endswith("error:zero_input") and "nan" in lines[1]
        assert "error" not in lines[2]

    def test_parse_error(self):
        assert main(["pdf-eval", "--X", "1+", "--Y", "1"]) == EXIT_CONFIG
        assert main(["pdf-eval", "--X", "1,2", "--Y", "1,2,3"]) == EXIT_CONFIG
        assert main(["pdf-eval", "--input", "/nonexistent.csv"]) == EXIT_CONFIG

    def test_batch_speed(self, tmp_path):
        rng = np.random.default_rng(0)
        inp = tmp_path / "pairs.csv"
        X = rng.normal(size=10_000) + 1j * rng.normal(size=10_000) + 2
        Y = X + 0.01 * (rng.normal(size=10_000) + 1j * rng.normal(size=10_000))
        with open(inp, "w") as fh:
            fh.write("X_re,X_im,Y_re,Y_im\n")
            for x, y in zip(X, Y):
                fh.write(f"{x.real},{x.imag},{y.real},{y.imag}\n")
        out = tmp_path / "o.csv"
        t = time.perf_counter()
        assert main(["pdf-eval", "--input", str(inp), "-o", str(out)]) == EXIT_OK
        assert time.perf_counter() - t < 1.0
        assert len(_rows(out)) == 10_000


class TestOptInput:
    def test_small_gamma(self, capsys):
        assert main(["opt-input", "--gamma-tilde", "0.05", "--json"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert abs(doc["u"] - 0.995) < 30 * 0.05**4
        assert all(abs(r) < 1e-8 for r in doc["moment_residuals"])

    def test_text_and_csv(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        assert main(["opt-input", "--P", "1", "-o", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        for key in ("u=", "v=", "delta_lambda1=", "moment_residual_0=", "moment_residual_2="):
            assert key in text
        res = [abs(float(l.split("=")[1])) for l in text.splitlines() if l.startswith("moment_residual")]
        assert len(res) == 2 and max(res) < 1e-8
        rows = _rows(out)
        assert list(rows[0]) == ["rho", "p0_density", "p1_density"] and float(rows[0]["rho"]) == 0

    def test_asymptotic_line(self, capsys):
        assert main(["opt-input", "--gamma-tilde", "1e6"]) == EXIT_OK
        line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("asymptotic")][0]
        assert abs(float(line.split("rel_err_u*log^2=")[1].split()[0])) < 10

    def test_bad_config(self):
        assert main(["opt-input"]) == EXIT_CONFIG
        assert main(["opt-input", "--P", "1", "--gamma-tilde", "1"]) == EXIT_CONFIG
        assert main(["opt-input", "--P", "-1"]) == EXIT_CONFIG
        assert main(["opt-input", "--P", "1", "--Q", "-1"]) == EXIT_CONFIG


class TestMcValidate:
    def test_linear_baseline_passes(self, capsys):
        rc = main(["mc-validate", "--gamma", "0", "--Q", "1e-4", "--L", "1", "--samples", "20000", "--steps", "16"])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert "cov_xx" in out and "audit" in out

    def test_json_and_validation_exit(self, capsys):
        # a wrong reference at large noise must fail the z-test
        rc = main([
            "mc-validate", "--gamma", "1", "--Q", "0.05", "--L", "1", "--samples", "50000",
            "--steps", "16", "--no-audit", "--json",
        ])
        doc = json.loads(capsys.readouterr().out)
        assert rc == EXIT_VALIDATION and doc["passed"] is False
        assert "checks" in doc

    def test_config_errors(self):
        assert main(["mc-validate", "--X", "0"]) == EXIT_CONFIG
        assert main(["mc-validate", "--samples", "10"]) == EXIT_CONFIG


def test_gnuplot(tmp_path, capsys):
    assert main(["gnuplot", "--csv", "s.csv"]) == EXIT_OK
    script = capsys.readouterr().out
    assert "s.csv" in script and "plot" in script and "logscale x" in script


def test_usage_error_exit_code():
    assert main(["capacity-sweep", "--points", "abc"]) == EXIT_CONFIG
    assert main(["no-such-command"]) == EXIT_CONFIG


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "nlcap", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "capacity-sweep" in r.stdout and "mc-validate" in r.stdout
    r = subprocess.run([sys.executable, "-m", "nlcap", "capacity-sweep", "--help"], capture_output=True, text=True)
    assert "mW" in r.stdout and "1/(mW km)" in r.stdout
