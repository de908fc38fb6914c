import csv
import json
from pathlib import Path

import pytest
import yaml

from proactive.cli import main
from proactive.model import dump_scenario, single_user, symmetric
from proactive.experiments import fig6_scenario


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("PROACTIVE_OUT", str(tmp_path / "out"))
    return tmp_path


def scenario_file(tmp_path, sc, name="sc.yaml"):
    path = tmp_path / name
    dump_scenario(sc, path)
    return str(path)


def test_validate_ok_and_invalid(out, capsys):
    good = scenario_file(out, single_user(0.5, 0.5))
    assert main(["validate", good]) == 0
    bad = out / "bad.yaml"
    bad.write_text(yaml.safe_dump({
        "users": 1, "service_size": 1, "demand": {"marginals": [1.5]},
        "channel": {"states": [1, 2], "probs": [[0.5, 0.5]]},
    }))
    assert main(["validate", str(bad)]) == 2
    assert "probability out of range" in capsys.readouterr().out


def test_usage_errors(out):
    with pytest.raises(SystemExit) as exc:
        main(["bound"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    sc = scenario_file(out, single_user(0.5, 0.5))
    assert main(["simulate", sc, "--policy", "proactive-ti"]) == 1
    assert main(["bound", sc, "--model", "tv-general"]) == 1
    assert main(["experiment", "fig9"]) == 1


def test_missing_scenario_is_invalid(out):
    assert main(["bound", str(out / "nope.yaml")]) == 2


def test_bound_fig6_writes_solution(out, capsys):
    sc = scenario_file(out, fig6_scenario())
    assert main(["bound", sc]) == 0
    text = capsys.readouterr().out
    assert "bound=" in text and "converged=True" in text
    doc = json.loads((out / "out" / "sc.ti.solution.json").read_text())
    assert doc["kind"] == "ti" and doc["shape"] == [2, 4, 4]
    assert doc["bound"] < 1.1004


def test_bound_zero_demand(out, capsys):
    sc = scenario_file(out, single_user(0.0, 0.5))
    assert main(["bound", sc, "--out", str(out / "s.json")]) == 0
    assert json.loads((out / "s.json").read_text())["bound"] <= 1e-10


def test_bound_tv_equals_ti_at_period_one(out):
    sc = scenario_file(out, single_user(0.5, 0.5))
    main(["bound", sc, "--model", "ti", "--out", str(out / "a.json")])
    main(["bound", sc, "--model", "tv", "--out", str(out / "b.json")])
    a = json.loads((out / "a.json").read_text())["bound"]
    b = json.loads((out / "b.json").read_text())["bound"]
    assert a == pytest.approx(b, abs=1e-10)


def test_bound_non_convergence_exit_code(out):
    sc = scenario_file(out, single_user(0.5, 0.5))
    assert main(["bound", sc, "--max-iter", "1", "--tol", "1e-15"]) == 3


def test_simulate_reactive_fig4_corner(out):
    sc = scenario_file(out, single_user(1.0, 1.0))
    target = out / "r.csv"
    assert main(["simulate", sc, "--horizon", "500", "--reps", "3", "--out", str(target)]) == 0
    row = next(csv.DictReader(target.open()))
    assert float(row["mean_cost"]) == 1.0
    assert row["policy"] == "reactive" and row["reps"] == "3"


def test_simulate_is_byte_deterministic(out):
    sc = scenario_file(out, symmetric(2, 0.42, [0.7, 0.2], (0.5, 2.0)))
    args = ["simulate", sc, "--policy", "proactive-tv", "--T", "4", "--horizon", "400",
            "--reps", "2", "--seed", "9"]
    main(args + ["--out", str(out / "a.csv"), "--per-period", str(out / "pa.csv")])
    main(args + ["--out", str(out / "b.csv"), "--per-period", str(out / "pb.csv")])
    assert (out / "a.csv").read_bytes() == (out / "b.csv").read_bytes()
    assert (out / "pa.csv").read_bytes() == (out / "pb.csv").read_bytes()
    assert len((out / "pa.csv").read_text().splitlines()) == 3


def test_simulate_from_solution_file(out):
    sc = scenario_file(out, single_user(0.5, 0.5))
    main(["bound", sc, "--out", str(out / "s.json")])
    common = ["simulate", sc, "--policy", "proactive-ti", "--T", "3", "--horizon", "300", "--reps", "2"]
    main(common + ["--solution", str(out / "s.json"), "--out", str(out / "a.csv")])
    main(common + ["--out", str(out / "b.csv")])
    assert (out / "a.csv").read_text() == (out / "b.csv").read_text()


def test_experiment_fig4(out, capsys):
    assert main(["experiment", "fig4", "--out", str(out / "figs")]) == 0
    rows = list(csv.DictReader((out / "figs" / "fig4.csv").open()))
    assert len(rows) == 121
    for r in rows:
        assert float(r["reactive"]) >= float(r["proactive_bound"]) - 1e-12
        if r["pi"] == "1.0" and r["psi_bad"] in ("0.0", "1.0"):
            assert float(r["reactive"]) == pytest.approx(float(r["proactive_bound"]), abs=1e-8)


def test_experiment_fig5(out):
    assert main(["experiment", "fig5", "--out", str(out / "figs")]) == 0
    flat = [float(r["proactive_bound"]) for r in csv.DictReader((out / "figs" / "fig5_psi1.csv").open())]
    assert max(flat) - min(flat) <= 1e-10


def write_trace_csv(path, rows):
    path.write_text("pass_id,timestamp_s,rsrp_dbm\n" + "".join(f"{p},{t},{r}\n" for p, t, r in rows))


def test_ingest_degenerate(out, capsys):
    trace = out / "t.csv"
    write_trace_csv(trace, [("a", t, -70) for t in range(6)])
    assert main(["ingest", str(trace), "--slot-seconds", "1", "--period", "3"]) == 0
    doc = yaml.safe_load(capsys.readouterr().out)
    assert doc["channel"]["probs"] == [[[0.0, 0.0, 0.0, 1.0]]] * 3


def test_ingest_two_passes(out):
    trace = out / "t.csv"
    write_trace_csv(trace, [("a", 0, -70), ("a", 1, -95), ("b", 100, -120), ("b", 101, -95)])
    target = out / "frag.yaml"
    assert main(["ingest", str(trace), "--slot-seconds", "1", "--period", "2",
                 "--out", str(target)]) == 0
    doc = yaml.safe_load(target.read_text())
    assert doc["channel"]["probs"][0] == [[0.5, 0.0, 0.0, 0.5]]
    assert doc["channel"]["probs"][1] == [[0.0, 1.0, 0.0, 0.0]]


def test_ingest_errors(out, capsys):
    trace = out / "t.csv"
    trace.write_text("pass_id,timestamp_s\na,0\n")
    assert main(["ingest", str(trace), "--slot-seconds", "1", "--period", "2"]) == 2
    assert "rsrp_dbm" in capsys.readouterr().err
    assert main(["ingest", str(trace), "--period", "2"]) == 1


@pytest.mark.parametrize("name", ["two_user.yaml", "two_user_cyclic.yaml"])
def test_shipped_scenarios_validate(name):
    path = Path(__file__).resolve().parent.parent / "scenarios" / name
    assert main(["validate", str(path)]) == 0
