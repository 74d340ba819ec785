import json
import subprocess
import sys

import numpy as np
import pytest

from convreg.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    kv = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, kv


@pytest.fixture(scope="module")
def sim120(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "d120.csv"
    assert main(["simulate", "--n", "120", "--customers", "5000", "--seed", "5", "--out", str(path)]) == 0
    return path


def test_simulate_rows_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, kv = run(capsys, "simulate", "--n", "3", "--customers", "100", "--seed", "7", "--out", str(a))
    assert code == 0 and kv["rows"] == "3"
    run(capsys, "simulate", "--n", "3", "--customers", "100", "--seed", "7", "--out", str(b))
    assert len(a.read_text().splitlines()) == 4
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    meta = json.loads(a.with_suffix(".json").read_text())
    assert set(meta) == {"seed", "customers", "generator", "n", "domain"}


def test_simulate_rejects_zero_points(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "convreg.cli", "simulate", "--n", "0", "--out",
                           str(tmp_path / "x.csv")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert not (tmp_path / "x.csv").exists()


def test_fit_b_zero_bound_is_flat_mean(sim120, tmp_path, capsys):
    out = tmp_path / "b.json"
    code, kv = run(capsys, "fit", "--data", str(sim120), "--problem", "b", "--u", "0", "--out", str(out))
    assert code == 0
    y = np.loadtxt(sim120, delimiter=",", skiprows=1)[:, 1]
    res = json.loads(out.read_text())
    pieces = res["model"]["pieces"]
    assert all(abs(p["slope"][0]) <= 1e-8 for p in pieces)
    assert float(kv["sse"]) == pytest.approx(np.var(y), rel=1e-7)


def test_fit_c_at_lse_error_beats_lse_bound(sim120, tmp_path, capsys):
    code, a = run(capsys, "fit", "--data", str(sim120), "--problem", "a", "--lambda", "0",
                  "--out", str(tmp_path / "a.json"))
    assert code == 0
    code, c = run(capsys, "fit", "--data", str(sim120), "--problem", "c", "--s", a["sse"],
                  "--out", str(tmp_path / "c.json"))
    assert code == 0
    assert float(c["grad_bound"]) <= float(a["grad_bound"]) * (1 + 1e-4)


def test_fit_c_auto(sim120, tmp_path, capsys):
    from convreg import Box, Dataset
    from convreg.hyperparams import PartitionSpec, estimate_s_partition
    code, kv = run(capsys, "fit", "--data", str(sim120), "--problem", "c", "--auto", "--out", str(tmp_path / "c.json"))
    assert code == 0
    data = Dataset.from_csv(sim120.read_text(), Box(1.2, 1.3, 1))
    s = estimate_s_partition(data, PartitionSpec(8))
    assert float(kv["hyperparameter"]) == pytest.approx(s)
    assert float(kv["sse"]) <= s + 1e-6


def test_fit_infeasible_exit_code(sim120, tmp_path, capsys):
    code, kv = run(capsys, "fit", "--data", str(sim120), "--problem", "c", "--s", "0",
                   "--out", str(tmp_path / "c.json"))
    assert code == 1
    assert kv["status"] == "infeasible" and float(kv["min_sse"]) > 0
    assert not (tmp_path / "c.json").exists()


def test_fit_needs_one_hyperparameter(sim120, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--data", str(sim120), "--problem", "b", "--u", "1", "--s", "1", "--out", str(tmp_path / "x")])
    assert info.value.code == 2


def test_eval_grid_truth_and_round_trip(sim120, tmp_path, capsys):
    model = tmp_path / "m.json"
    run(capsys, "fit", "--data", str(sim120), "--problem", "b", "--u", "10", "--out", str(model))
    e1, e2 = tmp_path / "e1.csv", tmp_path / "e2.csv"
    code, kv = run(capsys, "eval", "--model", str(model), "--grid", "5", "--truth", "mm1", "--out", str(e1))
    assert code == 0 and kv["rows"] == "5"
    lines = e1.read_text().splitlines()
    assert lines[0] == "x1,fhat,g1,f0,df0"
    x = [float(r.split(",")[0]) for r in lines[1:]]
    assert np.allclose(x, np.linspace(1.2, 1.3, 5))
    assert float(lines[3].split(",")[3]) == pytest.approx(3.2)

    from convreg.estimators import FitResult
    copy = tmp_path / "copy.json"
    copy.write_text(FitResult.from_dict(json.loads(model.read_text())).to_json())
    run(capsys, "eval", "--model", str(copy), "--grid", "5", "--truth", "mm1", "--out", str(e2))
    assert e1.read_bytes() == e2.read_bytes()


def test_experiment_small(tmp_path, capsys):
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    argv = ["experiment", "--n-list", "10", "--reps", "2", "--customers", "200", "--seed", "3", "--jobs", "1"]
    code, kv = run(capsys, *argv, "--out", str(d1))
    assert code == 0
    run(capsys, *argv, "--out", str(d2))
    report = json.loads((d1 / "report.json").read_text())
    assert len(report["runs"][0]["replications"]) == 2
    for name in ["report.json", "table_value_mae.csv", "table_grad_mae.csv", "raw_mae.csv"]:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
