import csv
import json
import math

import pytest
from conftest import PROBLEMS

from dpp import cli, harness
from dpp.lp import compute_B_lp
from dpp.oracle import optimum
from dpp.problem_io import parse_problem_file
from dpp.queues import queue_norm_bound
from dpp.trace import fmt

LP = str(PROBLEMS / "lp_acceptance.json")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_lp_passes(tmp_path):
    assert cli.main(["run", "--problem", LP, "--epsilon", "0.1", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "report.csv")
    assert rows and all(r["status"] == "pass" for r in rows)
    assert {int(r["t"]) for r in rows} == {25, 100, 200, 400}
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["V"] == 10.0 and doc["passed"] is True and doc["mu_certified"] is True
    assert len(read_csv(tmp_path / "trace.csv")) == 400


def test_epsilon_one_smoke(tmp_path):
    assert cli.main(["run", "--problem", LP, "--epsilon", "1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert len(lines) >= 5
    assert lines[0].startswith("t,")


def test_unknown_kind_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "qp"}')
    out = tmp_path / "out"
    assert cli.main(["run", "--problem", str(bad), "--epsilon", "0.1", "--out", str(out)]) == 1
    assert not out.exists()
    assert "unknown problem kind" in capsys.readouterr().err


@pytest.mark.parametrize("eps", ["0", "1.5", "-0.1", "nan"])
def test_epsilon_out_of_range(tmp_path, eps):
    assert cli.main(["run", "--problem", LP, "--epsilon", eps, "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_usage_errors(tmp_path):
    assert cli.main([]) == 1
    assert cli.main(["run", "--problem", LP]) == 1
    assert cli.main(["sweep", "--problem", LP, "--epsilons", "0.1", "--out", str(tmp_path / "s")]) == 1
    assert not (tmp_path / "s").exists()
    assert cli.main(["sweep", "--problem", LP, "--epsilons", "0.1,abc", "--out", str(tmp_path / "s")]) == 1


def test_oracle_refuses_large_problem(tmp_path):
    doc = {"kind": "lp", "b": [1] * 5, "A": [], "c": [], "x_min": [0] * 5, "x_max": [1] * 5}
    p = tmp_path / "big.json"
    p.write_text(json.dumps(doc))
    assert cli.main(["oracle", "--problem", str(p), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_oracle_json(tmp_path):
    assert cli.main(["oracle", "--problem", LP, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert set(doc) == {"optimum", "optimizer", "mu", "margin", "resolution", "error_bar"}
    assert doc["optimum"] == pytest.approx(1.0, abs=2e-3)


def test_bound_failure_exit_code(tmp_path, monkeypatch):
    real = harness.run_experiment

    def failing(*args, **kwargs):
        traces, report = real(*args, **kwargs)
        report.rows[0].status = "fail"
        return traces, report

    monkeypatch.setattr(harness, "run_experiment", failing)
    assert cli.main(["run", "--problem", LP, "--epsilon", "0.1", "--out", str(tmp_path)]) == 3
    assert "fail" in (tmp_path / "report.csv").read_text()


def test_byte_identical_reruns(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", "--problem", LP, "--epsilon", "0.1", "--out", str(tmp_path / d)]) == 0
    for name in ("trace.csv", "report.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_stochastic_run_writes_per_seed(tmp_path):
    args = ["run", "--problem", str(PROBLEMS / "toy_stochastic.json"), "--epsilon", "0.2",
            "--seeds", "1,2,3", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    assert sorted(p.name for p in tmp_path.glob("trace_seed*.csv")) == [
        "trace_seed1.csv", "trace_seed2.csv", "trace_seed3.csv"]


def test_sweep_caps_recomputed(tmp_path):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--problem", LP, "--epsilons", "0.1,0.05,0.025", "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "epsilon,t,obj_gap,max_violation,cap_obj,cap_violation,pass"
    lp = parse_problem_file(LP).problem
    B = compute_B_lp(lp)
    orc = optimum(lp)
    mu = math.sqrt(sum(m * m for m in orc.mu))
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 3
    for r in rows:
        eps = float(r["epsilon"])
        v, t = 1 / eps, int(r["t"])
        assert t == math.ceil(1 / eps**2 - 1e-9)
        assert r["cap_obj"] == fmt(B / v)
        assert r["cap_violation"] == fmt(queue_norm_bound(v, mu, B, t) / t)
        assert r["pass"] == "true"


def test_distributed_command(tmp_path):
    args = ["distributed", "--problem", str(PROBLEMS / "consensus_line.json"), "--epsilon", "0.1",
            "--t-max", "100", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    rows = read_csv(tmp_path / "consensus.csv")
    assert list(rows[0]) == ["t", "max_pairwise_theta_gap", "sum_objective", "max_constraint_violation"]
    assert len(rows) == 100
    assert {p.name for p in tmp_path.glob("node_*.csv")} == {"node_0.csv", "node_1.csv", "node_2.csv"}
    status = {r["check"]: r["status"] for r in read_csv(tmp_path / "report.csv") if r["t"] == "100"}
    assert status and all(s == "pass" for s in status.values())


def test_distributed_rejects_other_kinds(tmp_path):
    assert cli.main(["distributed", "--problem", LP, "--epsilon", "0.1", "--out", str(tmp_path / "o")]) == 1
