import json
import subprocess
import sys

import numpy as np
import pytest

from circwass import fuzz as fuzz_mod
from circwass.bench import rows_from_csv
from circwass.cli import main
from circwass.histogram import load_histogram
from circwass.toy import history_from_csv, history_table_from_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pair(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps([0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0]))
    b.write_text(json.dumps([0.0, 0.0, 0.5, 0.0, 0.2, 0.0, 0.3, 0.0]))
    return str(a), str(b)


def test_dist_power_routes_to_convex(capsys, pair):
    code, out, _ = run(capsys, "dist", *pair, "--metric", "power", "--rho", "2", "--oracle")
    rep = json.loads(out)
    assert code == 0
    assert rep["solver"] == "convex_circular"
    assert rep["gap"] <= 1e-6 and rep["value"] == pytest.approx(rep["oracle"], abs=1e-6)
    assert {"alpha_star", "micros", "n_bins"} <= set(rep)


def test_dist_self_is_zero(capsys, pair):
    code, out, _ = run(capsys, "dist", pair[0], pair[0], "--metric", "linear")
    assert code == 0 and json.loads(out)["value"] == 0.0


def test_dist_chord_uses_lp(capsys, pair):
    code, out, _ = run(capsys, "dist", *pair, "--metric", "chord", "--sinkhorn")
    rep = json.loads(out)
    assert rep["solver"] == "lp_exact"
    assert rep["sinkhorn"] >= rep["value"] - 1e-9


def test_dist_csv_input_and_out_file(capsys, tmp_path, pair):
    c = tmp_path / "c.csv"
    c.write_text("\n".join(map(str, json.loads(open(pair[1]).read()))) + "\n")
    dest = tmp_path / "r.json"
    code, out, _ = run(capsys, "dist", pair[0], str(c), "--out", str(dest))
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["solver"] == "linear_circular"


def test_dist_errors(capsys, tmp_path, pair):
    bad = tmp_path / "bad.json"
    bad.write_text("[0.5, 0.6]")
    short = tmp_path / "short.json"
    short.write_text("[0.5, 0.5]")
    assert run(capsys, "dist", str(bad), str(bad))[0] == 1
    assert run(capsys, "dist", pair[0], str(short))[0] == 1
    assert run(capsys, "dist", pair[0], str(tmp_path / "missing.json"))[0] == 1
    code, _, err = run(capsys, "dist", str(bad), str(bad))
    assert "error" in err
    with pytest.raises(SystemExit) as exc:
        main(["dist", pair[0]])
    assert exc.value.code == 1


def test_label_eight_bin_binomial(capsys, tmp_path):
    code, out, _ = run(capsys, "label", "--N", "8", "--j", "0", "--family", "binomial", "--K", "4",
                       "--p", "0.5", "--xi", "0.1", "--eta", "0.05")
    t = json.loads(out)
    assert code == 0 and t[0] == 0.89375
    np.testing.assert_allclose(t, [0.89375, 0.03125, 0.0125, 0.00625, 0.00625, 0.00625, 0.0125, 0.03125],
                               atol=1e-15)
    path = tmp_path / "t.json"
    run(capsys, "label", "--N", "8", "--j", "0", "--out", str(path))
    assert load_histogram(path).tolist() == t


def test_label_one_hot_and_csv(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, _, _ = run(capsys, "label", "--N", "6", "--j", "2", "--xi", "0", "--eta", "0", "--out", str(path))
    assert code == 0
    assert path.read_text().splitlines()[0] == "bin,value"
    assert load_histogram(path).tolist() == [0, 0, 1, 0, 0, 0]
    _, out, _ = run(capsys, "label", "--N", "6", "--j", "2", "--format", "csv")
    b, v = out.splitlines()[3].split(",")
    assert b == "2" and float(v) == pytest.approx(0.85 + 0.1 * 6 / 16 + 0.05 / 6, abs=1e-15)


def test_label_poisson_is_asymmetric(capsys):
    _, out, _ = run(capsys, "label", "--N", "36", "--j", "0", "--family", "poisson", "--K", "10", "--lambda", "5")
    t = np.array(json.loads(out))
    assert t.sum() == pytest.approx(1.0, abs=1e-9)
    assert abs(t[1] - t[35]) > 1e-4


def test_label_errors(capsys):
    assert run(capsys, "label", "--N", "8", "--j", "8")[0] == 1
    assert run(capsys, "label", "--N", "8", "--j", "0", "--xi", "0.8", "--eta", "0.5")[0] == 1
    assert run(capsys, "label", "--N", "8", "--j", "0", "--p", "1.5")[0] == 1


def test_fuzz_report_and_determinism(capsys):
    code, out, _ = run(capsys, "fuzz", "--cases", "20", "--max-n", "8", "--seed", "3")
    rep = json.loads(out)
    assert code == 0 and rep["ok"] and rep["violations"] == []
    assert all(v["max_tolerance_ratio"] <= 1 for v in rep["solvers"].values())
    again = run(capsys, "fuzz", "--cases", "20", "--max-n", "8", "--seed", "3", "--workers", "4")[1]
    assert json.loads(again) == rep


def test_fuzz_step(capsys):
    code, out, _ = run(capsys, "fuzz", "--cases", "50", "--solver", "step")
    rep = json.loads(out)
    assert code == 0
    assert all(v["max_gap"] < 1e-9 for v in rep["solvers"].values())


def test_fuzz_violation_exit_code(capsys, monkeypatch):
    monkeypatch.setattr(fuzz_mod, "convex_tolerance", lambda spec, n, M: -1.0)
    code, out, _ = run(capsys, "fuzz", "--cases", "5", "--solver", "convex")
    rep = json.loads(out)
    assert code == 2 and not rep["ok"] and len(rep["violations"]) > 0


def test_fuzz_bad_solver(capsys):
    assert run(capsys, "fuzz", "--solver", "magic")[0] == 1


def test_bench_csv(capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "8,36", "--reps", "3", "--warmup", "1")
    assert code == 0
    assert out.splitlines()[0] == "solver,N,mean_us,p95_us,reps"
    rows = rows_from_csv(out)
    assert {r.solver for r in rows} == {"linear_circular", "convex_circular", "sinkhorn_approx", "lp_exact"}
    assert all(r.mean_us > 0 and r.reps == 3 for r in rows)


def test_bench_single_solver(capsys):
    _, out, _ = run(capsys, "bench", "--solver", "linear", "--sizes", "36,360", "--reps", "5")
    rows = rows_from_csv(out)
    assert [r.n for r in rows] == [36, 360] and {r.solver for r in rows} == {"linear_circular"}


def test_train_toy_one_epoch(capsys):
    code, out, err = run(capsys, "train-toy", "--epochs", "1", "--N", "8", "--samples", "200",
                         "--eval-samples", "100")
    assert code == 0
    hist = history_from_csv(out)
    assert len(hist) == 1 and hist[0].epoch == 0
    assert "mean MAAD" in err


def test_train_toy_compare_and_summary(capsys, tmp_path):
    summary = tmp_path / "s.json"
    args = ["train-toy", "--compare", "ce,wass-power2-binomial", "--seeds", "2", "--epochs", "2", "--N", "8",
            "--samples", "200", "--eval-samples", "100", "--summary", str(summary)]
    code, out, _ = run(capsys, *args)
    table = history_table_from_csv(out)
    assert code == 0 and len(table) == 4
    s = json.loads(summary.read_text())
    assert set(s) == {"ce", "wass-power2-binomial"} and len(s["ce"]["per_seed"]) == 2
    assert run(capsys, *args)[1] == out


def test_train_toy_adaptive_logs_weights(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "circwass.cli", "train-toy", "--loss", "wass-linear", "--adaptive",
                           "--epochs", "10", "--N", "8", "--samples", "200", "--eval-samples", "50",
                           "--out", str(tmp_path / "h.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    weights = [float(line.split()[-1]) for line in proc.stderr.splitlines() if "blend weight" in line]
    assert weights[0] == 10 and weights[-1] == 0 and np.all(np.diff(weights) < 0)


def test_train_toy_bad_loss(capsys):
    assert run(capsys, "train-toy", "--loss", "nope", "--epochs", "1")[0] == 1


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "circwass.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "train-toy" in proc.stdout
