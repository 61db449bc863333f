import json
import math
import subprocess
import sys

import pytest

from rmt_clt.cli import main

UNIT = '{"kind": "constant", "n_rows": 4, "n_cols": 4, "s2": 1}'
T = (math.sqrt(5) - 1) / 2


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_sim_config(tmp_path, name="sim.json", **over):
    cfg = {
        "profile": {"kind": "sampled", "function": "exp-decay", "n_rows": 16, "n_cols": 12},
        "rho": 0.5,
        "distribution": "qpsk",
        "trials": 300,
        "seed": 20261015,
        "quadrature": {"omega_max": 50.0},
    }
    cfg.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_solve(capsys):
    code, out, err = run_cli(capsys, "solve", "--profile", UNIT, "--rho", "1")
    assert code == 0 and err == ""
    rep = json.loads(out)
    assert rep["config"]["command"] == "solve"
    res = rep["result"]
    assert res["t"] == pytest.approx([T] * 4, abs=1e-12)
    assert res["v_n"] == pytest.approx(2 * math.log(1 + T) - T / (1 + T), abs=1e-12)
    assert abs(res["trace_identity_gap"]) < 1e-12


def test_floats_are_written_with_17_digits(capsys):
    _, out, _ = run_cli(capsys, "solve", "--profile", UNIT, "--rho", "1")
    text = next(ln for ln in out.splitlines() if '"v_n"' in ln).split(":")[1].strip().rstrip(",")
    assert text == format(float(text), ".17g")


def test_variance_by_distribution(capsys):
    code, out, _ = run_cli(capsys, "variance", "--profile", UNIT, "--rho", "1", "--dist", "qpsk")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["kappa"] == -1
    assert res["theta_sq"] == pytest.approx(-math.log(1 - T**4) - T**4, abs=1e-12)


def test_variance_defaults_to_gaussian(capsys):
    _, out, _ = run_cli(capsys, "variance", "--profile", UNIT, "--rho", "1")
    assert json.loads(out)["result"]["theta_sq"] == pytest.approx(-math.log(1 - T**4), abs=1e-12)


def test_profile_from_csv_and_descriptor_file(capsys, tmp_path, monkeypatch):
    (tmp_path / "p.csv").write_text("1,1\n1,1\n")
    (tmp_path / "d.json").write_text('{"kind": "file", "path": "p.csv"}')
    monkeypatch.chdir(tmp_path)
    _, a, _ = run_cli(capsys, "variance", "--profile", "p.csv", "--rho", "1")
    _, b, _ = run_cli(capsys, "variance", "--profile", str(tmp_path / "d.json"), "--rho", "1")
    assert json.loads(a)["result"] == json.loads(b)["result"]


def test_bias_with_nodes_csv(capsys, tmp_path):
    nodes = tmp_path / "nodes.csv"
    code, out, _ = run_cli(
        capsys, "bias", "--profile", UNIT, "--rho", "1", "--dist", "qpsk", "--nodes-csv", str(nodes)
    )
    assert code == 0
    res = json.loads(out)["result"]
    assert res["b_n"] == pytest.approx(0.0729, abs=2e-4)
    rows = nodes.read_text().splitlines()
    assert rows[0] == "omega,beta" and len(rows) - 1 == res["n_nodes"]
    assert "nodes_csv" not in json.loads(out)["config"]


def test_limit_separable(capsys):
    code, out, _ = run_cli(capsys, "limit", "--sigma2", "separable:1;1,0.5;1", "--c", "1", "--rho", "1", "--grid", "64")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["theta_sq_separable"] == pytest.approx(res["theta_sq"], rel=1e-11)


def test_out_file(capsys, tmp_path):
    dest = tmp_path / "r.json"
    code, out, _ = run_cli(capsys, "solve", "--profile", UNIT, "--rho", "2", "--out", str(dest))
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["config"]["rho"] == 2


def test_simulate_is_deterministic_and_report_reproduces(capsys, tmp_path):
    cfg = write_sim_config(tmp_path)
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    trials = tmp_path / "trials.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(a), "--trials-csv", str(trials), "--threads", "1"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["report", "--trials", str(trials), "--out", str(c)]) == 0
    assert c.read_bytes() == a.read_bytes()
    rep = json.loads(a.read_text())
    assert set(rep) == {"version", "config", "references", "diagnostics"}
    assert rep["diagnostics"]["trials"] == 300
    lines = trials.read_text().splitlines()
    assert lines[2] == "trial_index,I_n" and len(lines) == 303


def test_simulate_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["simulate", "--config", str(write_sim_config(tmp_path, "x.json", seed=1)), "--out", str(a)])
    main(["simulate", "--config", str(write_sim_config(tmp_path, "y.json", seed=2)), "--out", str(b)])
    da, db = json.loads(a.read_text())["diagnostics"], json.loads(b.read_text())["diagnostics"]
    assert da["mean_I"] != db["mean_I"]


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--rho", "1"],
        ["solve", "--profile", UNIT, "--rho", "-1"],
        ["solve", "--profile", '{"kind": "constant"}', "--rho", "1"],
        ["solve", "--profile", "{not json", "--rho", "1"],
        ["variance", "--profile", UNIT, "--rho", "1", "--kappa", "-2"],
        ["variance", "--profile", UNIT, "--rho", "1", "--dist", "laplace"],
        ["limit", "--sigma2", "bogus", "--c", "1", "--rho", "1"],
        ["frobnicate"],
        [],
    ],
)
def test_config_errors_exit_1(capsys, argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 1 and out == ""
    assert json.loads(err)["error"] == "config"


@pytest.mark.parametrize(
    "over",
    [dict(trials=1), dict(distribution="laplace"), dict(seed=-3), dict(extra=True), dict(rho=0)],
)
def test_simulate_schema_errors_exit_1(capsys, tmp_path, over):
    code, _, err = run_cli(capsys, "simulate", "--config", str(write_sim_config(tmp_path, **over)))
    assert code == 1
    assert json.loads(err)["exit_code"] == 1


def test_bad_csv_exits_1(capsys, tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    code, _, err = run_cli(capsys, "solve", "--profile", str(tmp_path / "bad.csv"), "--rho", "1")
    assert code == 1 and "ragged" in json.loads(err)["message"]


def test_numeric_failure_exits_2(capsys):
    code, out, err = run_cli(
        capsys, "bias", "--profile", UNIT, "--rho", "1", "--kappa", "-1", "--tol", "1e-300", "--max-panels", "32"
    )
    assert code == 2 and out == ""
    assert json.loads(err)["error"] == "numeric"


@pytest.mark.parametrize("kind", ["profile", "config", "trials", "out"])
def test_io_failures_exit_3(capsys, tmp_path, kind):
    missing = str(tmp_path / "nope" / "x")
    argv = {
        "profile": ["solve", "--profile", missing + ".csv", "--rho", "1"],
        "config": ["simulate", "--config", missing + ".json"],
        "trials": ["report", "--trials", missing + ".csv"],
        "out": ["solve", "--profile", UNIT, "--rho", "1", "--out", missing + ".json"],
    }[kind]
    code, _, err = run_cli(capsys, *argv)
    assert code == 3
    assert json.loads(err)["error"] == "io"


def test_report_rejects_foreign_file(capsys, tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("trial_index,I_n\n0,1.0\n")
    code, _, _ = run_cli(capsys, "report", "--trials", str(f))
    assert code == 1


def test_report_rejects_reordered_trials(capsys, tmp_path):
    cfg = write_sim_config(tmp_path, trials=5)
    trials = tmp_path / "t.csv"
    main(["simulate", "--config", str(cfg), "--trials-csv", str(trials), "--out", str(tmp_path / "r.json")])
    lines = trials.read_text().splitlines()
    lines[3], lines[4] = lines[4], lines[3]
    trials.write_text("\n".join(lines) + "\n")
    code, _, _ = run_cli(capsys, "report", "--trials", str(trials))
    assert code == 1


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "rmt_clt.cli", "solve", "--profile", UNIT, "--rho", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["iterations"] > 0
