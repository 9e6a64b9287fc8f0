import json
import subprocess
import sys

import pytest

from lotflow.cli import fmt_money, fmt_pct, main

from conftest import DATA


def run_cli(*args):
    proc = subprocess.run([sys.executable, "-m", "lotflow.cli", *map(str, args)],
                          capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def test_money_formatting():
    assert fmt_money(1.3) == "1.3000"
    assert fmt_money(-0.00001) == "0.0000"
    assert fmt_money(0.00005) == "0.0000"  # half to even
    assert fmt_money(0.00015) == "0.0002"
    assert fmt_pct(12.345) == "12.34"


def test_sdp_command_and_replay(capsys):
    assert main(["sdp", str(DATA / "two_point.json"), "--replay", str(DATA / "table_paths.txt")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "1.3000"
    assert lines[5] == "D=(1,2,1) Q=(0,4,0) increment=3.0000"


def test_sdp_writes_dump_and_manifest(tmp_path, capsys):
    out, man = tmp_path / "sol.json", tmp_path / "run.json"
    assert main(["sdp", str(DATA / "two_point.json"), "--out", str(out), "--manifest", str(man)]) == 0
    assert json.loads(out.read_text())["value"] == pytest.approx(1.3)
    doc = json.loads(man.read_text())
    assert doc["command"] == "sdp" and doc["outputs"] == [str(out)]


def test_schema_error_exit_code(tmp_path):
    doc = json.loads((DATA / "two_point.json").read_text())
    del doc["pi"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run_cli("sdp", bad)
    assert code == 2 and "pi" in err


def test_state_explosion_exit_code():
    code, _, err = run_cli("sdp", DATA / "two_point.json", "--method", "exact", "--state-cap", "3")
    assert code == 3 and "period 2" in err


def test_unwritable_output_exit_code():
    code, _, _ = run_cli("sdp", DATA / "two_point.json", "--out", "/proc/definitely/not/here.json")
    assert code == 4
    code, _, _ = run_cli("bench", "--subset", "1", "--out", "/proc/definitely/not")
    assert code == 4


def test_bad_flags_exit_code():
    assert run_cli("tune", DATA / "two_point.json", "--policy", "xx")[0] == 2
    assert run_cli("sdp")[0] == 2
    assert run_cli("--threads", "0", "sdp", DATA / "two_point.json")[0] == 2
    assert run_cli("tune", DATA / "two_point.json", "--policy", "ss", "--population", "10")[0] == 2


def test_tune_outputs(tmp_path, capsys):
    pol, rep = tmp_path / "p.json", tmp_path / "r.csv"
    args = ["tune", str(DATA / "two_point.json"), "--policy", "ss", "--eval-scenarios", "2000",
            "--out", str(pol), "--report", str(rep)]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert json.loads(pol.read_text())["type"] == "sS"
    assert rep.read_text().splitlines()[0] == "mean,stderr,ci95,n,seed"
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_simulate_command(capsys):
    assert main(["simulate", str(DATA / "two_point.json"), str(DATA / "policy_ss.json"),
                 "--scenarios", "1000", "--paths", str(DATA / "table_paths.txt")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "mean,stderr,ci95,n,seed"
    assert out[2] == "D=(2,1,2) increment=3.8000"


def test_simulate_rejects_horizon_mismatch(tmp_path):
    pol = tmp_path / "p.json"
    pol.write_text(json.dumps({"type": "sS", "s": [0], "S": [1]}))
    assert run_cli("simulate", DATA / "two_point.json", pol)[0] == 2


def test_heuristic_zero_demand(capsys):
    assert main(["heuristic", str(DATA / "zero_demand.json"), "--scenarios", "100", "--samples", "50"]) == 0
    assert capsys.readouterr().out.startswith("mean 0.0000")


def test_heuristic_path_report(capsys):
    assert main(["heuristic", str(DATA / "two_point.json"), "--scenarios", "200", "--samples", "200",
                 "--paths", str(DATA / "table_paths.txt")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and lines[1].startswith("D=(2,1,2) Q=")


def test_thread_count_does_not_change_output():
    base = ["simulate", DATA / "two_point.json", DATA / "policy_ss.json", "--scenarios", "5000", "--seed", "3"]
    one = run_cli("--threads", "1", *base)
    four = run_cli("--threads", "4", *base)
    assert one[0] == four[0] == 0 and one[1] == four[1]


@pytest.mark.slow
def test_bench_subset_reproducible(tmp_path):
    args = ["bench", "--subset", "1", "--seed", "7", "--scenarios", "300", "--methods", "GA-sS", "Sim-opt",
            "--population", "40", "--elite", "4", "--generations", "30", "--train-scenarios", "100"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    for name in ("pivot_rmse.csv", "pivot_mape.csv", "pivot_ci.csv", "cases.csv"):
        ta, tb = (a / name).read_text(), (b / name).read_text()
        if name.startswith("pivot_rmse") or name.startswith("pivot_mape"):
            # the timing row is informational and may differ between runs
            ta, tb = ta.rsplit("Average time", 1)[0], tb.rsplit("Average time", 1)[0]
        assert ta == tb
    man = json.loads((a / "manifest.json").read_text())
    assert man["config"]["seed"] == 7 and len(man["cases"]) == 1
