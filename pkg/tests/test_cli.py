"""Tests for the command-line interface."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mnpiv import __version__
from mnpiv.cli import main
from mnpiv.dgp import DgpSpec, Family, simulate
from mnpiv.montest import MivTestConfig, bootstrap_critical_value
from mnpiv.npiv import Sample

FIXTURES = Path(__file__).parent / "fixtures"
ZETA = ["c_f=0.5", "c_w=1", "C_F=1.5", "w1=0.05", "w2=0.95", "x1=0.05", "x2=0.95", "xt1=0.25", "xt2=0.75"]


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


@pytest.fixture
def data_csv(tmp_path):
    s = simulate(DgpSpec(Family.MODEL1, n=300, seed=2, sigma_eps=0.7))
    rows = [(float(a), float(3 + 2 * b), float(-1 + c)) for a, b, c in zip(s.y, s.x, s.w)]
    return write_csv(tmp_path / "data.csv", ["y", "x", "w"], rows)


def run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main([*argv, "--output", str(out)])
    return code, out


def run_json(argv, tmp_path):
    code, out = run(argv, tmp_path)
    assert code == 0
    return json.loads(out.read_text())


class TestFit:
    def test_constrained_report(self, data_csv, tmp_path):
        rep = run_json(["fit", "--input", str(data_csv), "--constrained", "--kx-knots", "3", "--kw-knots", "4",
                        "--grid", "100"], tmp_path)
        assert rep["schema_version"] == 1 and rep["version"] == __version__
        assert rep["constrained"] and len(rep["beta"]) == 7
        assert len(rep["predictions"]["g_hat"]) == 100
        assert np.all(np.diff(rep["predictions"]["g_hat"]) >= -1e-8)
        assert rep["min_slope_hat"] >= -1e-8
        for key in ("knots", "degree", "tau_hat", "objective", "config", "rescale_map", "qp"):
            assert key in rep

    def test_predictions_on_original_scale(self, data_csv, tmp_path):
        rep = run_json(["fit", "--input", str(data_csv), "--grid", "5"], tmp_path)
        xs = rep["predictions"]["x"]
        assert xs[0] == pytest.approx(rep["rescale_map"]["x"]["min"])
        assert xs[-1] == pytest.approx(rep["rescale_map"]["x"]["max"])

    def test_degree_two_uses_knots(self, data_csv, tmp_path):
        rep = run_json(["fit", "--input", str(data_csv), "--constrained", "--degree-x", "2", "--degree-w", "3"],
                       tmp_path)
        assert rep["constraint_mode"] == "knots"
        assert rep["constraint_points"] == 5
        assert not rep["constraint_refined"]

    def test_missing_column(self, tmp_path, capsys):
        path = write_csv(tmp_path / "bad.csv", ["y", "x"], [(1, 2), (3, 4)])
        code, _ = run(["fit", "--input", str(path)], tmp_path)
        assert code == 2
        assert "w" in capsys.readouterr().err

    def test_malformed_number_reports_line(self, tmp_path, capsys):
        path = write_csv(tmp_path / "bad.csv", ["y", "x", "w"], [(1, 0.2, 0.3), (2, "abc", 0.4), (3, 0.5, 0.6)])
        code, _ = run(["fit", "--input", str(path)], tmp_path)
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        code, _ = run(["fit", "--input", str(tmp_path / "nope.csv")], tmp_path)
        assert code == 2

    def test_numerical_failure(self, tmp_path):
        rows = [(i, i / 39, 0.2 if i < 20 else 0.8) for i in range(40)]
        path = write_csv(tmp_path / "flat.csv", ["y", "x", "w"], rows)
        code, _ = run(["fit", "--input", str(path)], tmp_path)
        assert code == 3

    def test_repeat_is_byte_identical(self, data_csv, tmp_path):
        argv = ["fit", "--input", str(data_csv), "--constrained"]
        _, a = run(argv, tmp_path, "a.json")
        _, b = run(argv, tmp_path, "b.json")
        assert a.read_bytes() == b.read_bytes()


class TestTestMiv:
    def test_four_point_fixture_matches_brute_force(self, tmp_path):
        expected = json.loads((FIXTURES / "miv4_expected.json").read_text())
        rep = run_json(["test-miv", "--input", str(FIXTURES / "miv4.csv"), "--seed", "1", "--boot", "20",
                        "--h-min", str(expected["h_min"])], tmp_path)
        assert rep["statistic"] == pytest.approx(expected["statistic"], abs=1e-12)

    def test_report_fields(self, data_csv, tmp_path):
        rep = run_json(["test-miv", "--input", str(data_csv), "--seed", "7", "--boot", "50"], tmp_path)
        for key in ("statistic", "critical_value", "p_value", "alpha", "bandwidths", "argmax", "reject", "config"):
            assert key in rep
        assert rep["reject"] == (rep["statistic"] > rep["critical_value"])

    def test_matches_library(self, data_csv, tmp_path):
        rep = run_json(["test-miv", "--input", str(data_csv), "--seed", "7", "--boot", "50"], tmp_path)
        raw = np.loadtxt(data_csv, delimiter=",", skiprows=1)
        s = Sample.from_raw(raw[:, 0], raw[:, 1], raw[:, 2])
        c, _ = bootstrap_critical_value(s, MivTestConfig(n_boot=50, seed=7))
        assert rep["critical_value"] == c

    def test_critical_value_nonincreasing_in_alpha(self, data_csv, tmp_path):
        cs = []
        for alpha in ("0.01", "0.10"):
            rep = run_json(["test-miv", "--input", str(data_csv), "--seed", "7", "--boot", "100",
                            "--alpha", alpha], tmp_path)
            cs.append(rep["critical_value"])
        assert cs[0] >= cs[1]

    def test_seed_is_required(self, data_csv, tmp_path):
        code, _ = run(["test-miv", "--input", str(data_csv)], tmp_path)
        assert code == 2

    def test_outcome_column_optional(self, tmp_path):
        code, _ = run(["test-miv", "--input", str(FIXTURES / "miv4.csv"), "--seed", "1", "--boot", "5"], tmp_path)
        assert code == 0

    def test_threads_and_repeats_are_byte_identical(self, data_csv, tmp_path):
        argv = ["test-miv", "--input", str(data_csv), "--seed", "3", "--boot", "70"]
        _, a = run([*argv, "--threads", "1"], tmp_path, "a.json")
        _, b = run([*argv, "--threads", "8"], tmp_path, "b.json")
        _, c = run([*argv, "--threads", "8"], tmp_path, "c.json")
        assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestMc:
    def test_single_replication_has_zero_variance(self, tmp_path):
        code, out = run(["mc", "--model", "1", "--reps", "1", "--n", "200", "--sigma", "0.7", "--seed", "1"],
                        tmp_path, "t.csv")
        assert code == 0
        (row,) = read_table(out)
        assert float(row["var_uncon"]) == 0.0 and float(row["var_con"]) == 0.0

    def test_columns_and_cells(self, tmp_path):
        code, out = run(["mc", "--model", "2", "--reps", "3", "--n", "200", "--sigma", "0.1", "0.7",
                         "--kx", "2", "3", "--kw", "3", "4", "--seed", "1"], tmp_path, "t.csv")
        assert code == 0
        rows = read_table(out)
        assert len(rows) == 4
        tail = ["bias_sq_uncon", "var_uncon", "mse_uncon", "bias_sq_con", "var_con", "mse_con", "mse_ratio"]
        assert list(rows[0])[-7:] == tail
        assert {(r["sigma"], r["kx"], r["kw"]) for r in rows} == {
            ("0.1", "2", "3"), ("0.1", "3", "4"), ("0.7", "2", "3"), ("0.7", "3", "4")}

    def test_plot_data(self, tmp_path):
        plot = tmp_path / "plot.csv"
        code, _ = run(["mc", "--model", "1", "--reps", "5", "--n", "200", "--grid", "11", "--seed", "1",
                       "--plot-data", str(plot)], tmp_path, "t.csv")
        assert code == 0
        rows = read_table(plot)
        assert len(rows) == 11
        for r in rows:
            for est in ("uncon", "con"):
                mean, lo, hi = (float(r[f"{k}_{est}"]) for k in ("mean", "lower", "upper"))
                assert hi - mean == pytest.approx(mean - lo)
                assert lo <= mean <= hi

    def test_threads_and_repeats_are_byte_identical(self, tmp_path):
        argv = ["mc", "--model", "1", "--reps", "12", "--n", "200", "--sigma", "0.7", "--seed", "5"]
        _, a = run([*argv, "--threads", "1"], tmp_path, "a.csv")
        _, b = run([*argv, "--threads", "8"], tmp_path, "b.csv")
        _, c = run([*argv, "--threads", "8"], tmp_path, "c.csv")
        assert a.read_bytes() == b.read_bytes() == c.read_bytes()

    def test_mismatched_knot_lists(self, tmp_path):
        code, _ = run(["mc", "--kx", "2", "3", "--kw", "3", "--seed", "1"], tmp_path, "t.csv")
        assert code == 2


class TestDiagnose:
    def test_population_tau_increasing(self, tmp_path):
        rep = run_json(["diagnose", "--design", "example1", "--rho", "0.5", "--seed", "0"], tmp_path)
        taus = [t["tau_hat"] for t in rep["tau_hat"]]
        assert [t["K"] for t in rep["tau_hat"]] == [4, 6, 8, 10]
        assert np.all(np.diff(taus) > 0)

    def test_unrestricted_limit(self, tmp_path):
        rep = run_json(["diagnose", "--design", "example1", "--rho", "0.5", "--a-list", "inf", "--trunc", "0", "1",
                        "--seed", "0"], tmp_path)
        for tau, res in zip(rep["tau_hat"], rep["restricted_tau_hat"]):
            assert res["label"] == "exact"
            assert res["value"] == pytest.approx(tau["tau_hat"], abs=1e-6)

    def test_heuristic_label(self, tmp_path):
        rep = run_json(["diagnose", "--design", "example1", "--k-list", "4", "--a-list", "0", "--seed", "0"],
                       tmp_path)
        assert rep["restricted_tau_hat"][0]["label"] == "lower bound (heuristic)"

    def test_identification_constant(self, tmp_path):
        rep = run_json(["diagnose", "--design", "example1", "--k-list", "4", "--zeta", *ZETA, "--seed", "0"],
                       tmp_path)
        assert rep["identification_constant"] == pytest.approx(1131.37, abs=0.01)

    def test_zeta_file(self, tmp_path):
        zfile = tmp_path / "zeta.json"
        zfile.write_text(json.dumps({k: float(v) for k, v in (z.split("=") for z in ZETA)}))
        rep = run_json(["diagnose", "--design", "example1", "--k-list", "4", "--zeta-file", str(zfile),
                        "--seed", "0"], tmp_path)
        assert rep["identification_constant"] == pytest.approx(1131.37, abs=0.01)

    def test_bad_zeta_ordering(self, tmp_path, capsys):
        bad = [z if not z.startswith("xt1") else "xt1=0.01" for z in ZETA]
        code, _ = run(["diagnose", "--design", "example1", "--k-list", "4", "--zeta", *bad, "--seed", "0"],
                      tmp_path)
        assert code == 2
        assert "x1 < xt1" in capsys.readouterr().err

    def test_empirical_with_slope_sign(self, data_csv, tmp_path):
        rep = run_json(["diagnose", "--input", str(data_csv), "--k-list", "4", "6", "--a-list", "0",
                        "--seed", "0"], tmp_path)
        assert rep["config"]["mode"] == "empirical"
        assert set(rep["slope_sign_test"]) == {"slope", "se", "t_stat", "sign", "reject_flat"}

    def test_repeat_is_byte_identical(self, tmp_path):
        argv = ["diagnose", "--design", "example1", "--k-list", "4", "6", "--a-list", "0", "--seed", "2"]
        _, a = run(argv, tmp_path, "a.json")
        _, b = run(argv, tmp_path, "b.json")
        assert a.read_bytes() == b.read_bytes()


class TestEntryPoint:
    def test_console_script_exit_code(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", ["y", "x"], [(1, 2)])
        proc = subprocess.run([sys.executable, "-m", "mnpiv.cli", "fit", "--input", str(path)],
                              capture_output=True, text=True)
        assert proc.returncode == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert __version__ in capsys.readouterr().out

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2
