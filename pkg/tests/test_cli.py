import csv
import json
import os
import subprocess
import sys

import pytest

from pushtrack.cli import main, sweep_families

SMALL = ["--horizon", "600", "--initial-nodes", "20", "--arrival-rate", "0.02"]
SIX_NODE = "node_a,node_b,start_s,end_s\n0,1,0,10\n1,2,5,10\n3,4,0,4\n3,4,6,10\n4,5,2,8\n"


@pytest.fixture
def six_node(tmp_path):
    p = tmp_path / "six.csv"
    p.write_text(SIX_NODE)
    return str(p)


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_periodic_ten_replications(tmp_path):
    out = str(tmp_path / "o")
    argv = ["periodic", "--when", "linear", "--whom", "random", "--period", "60", "--participation", "0.25",
            "--replications", "10", "--seed", "7", "--out", out] + SMALL
    assert main(argv) == 0
    files = sorted(os.listdir(out))
    assert files == sorted([f"periodic_r{r}.json" for r in range(10)] + ["periodic_aggregate.json"])
    agg = _json(os.path.join(out, "periodic_aggregate.json"))
    assert agg["runs"] == 10 and agg["missed"] == 0
    offsets = [_json(os.path.join(out, f"periodic_r{r}.json"))["config"]["offset"] for r in range(10)]
    assert offsets == [6.0 * r for r in range(10)]


def test_periodic_csv_bundle_and_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("PUSHTRACK_OUT", str(tmp_path / "env"))
    assert main(["periodic", "--whom", "infra-only", "--period", "120", "--format", "both"] + SMALL) == 0
    base = tmp_path / "env"
    assert (base / "periodic_r0.json").exists()
    with open(base / "periodic_r0" / "messages.csv") as fh:
        assert len(list(csv.reader(fh))) - 1 == 5
    assert _json(base / "periodic_r0.json")["offload_ratio"] == 0.0


def test_analyze_six_node_trace(six_node, tmp_path):
    out = str(tmp_path / "a")
    assert main(["analyze", "--contacts", six_node, "--exact", "--out", out]) == 0
    s = _json(os.path.join(out, "stats.json"))
    assert s["avg_nodes"] == pytest.approx(5.1, abs=1e-12)
    assert s["avg_components"] == pytest.approx(2.2, abs=1e-12)
    with open(os.path.join(out, "contact_ccdf.csv")) as fh:
        rows = list(csv.reader(fh))[1:]
    assert [(float(a), float(b)) for a, b in rows] == [(0, 1), (4, 0.6), (5, 0.4), (6, 0.2), (10, 0)]


def test_analyze_gps_strategy_on_contacts_is_config_error(six_node, tmp_path, capsys):
    assert main(["analyze", "--contacts", six_node, "--whom", "gps-density", "--out", str(tmp_path)]) == 2
    assert "needs node positions" in capsys.readouterr().err


def test_periodic_gps_on_contacts_is_config_error(six_node, tmp_path):
    assert main(["periodic", "--contacts", six_node, "--whom", "gps-potential", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("argv", [
    ["periodic", "--period", "5"],
    ["periodic", "--delta-t", "3"],
    ["periodic", "--participation", "1.5"],
    ["periodic", "--replications", "0"],
    ["periodic", "--down-rate", "0"],
    ["floating", "--tolerance", "-1"],
    ["periodic", "--bogus"],
    ["periodic", "--when", "cubic"],
    ["analyze", "--trace", "/nonexistent/trace.csv"],
    [],
])
def test_bad_invocations_exit_2(argv, tmp_path):
    extra = ["--out", str(tmp_path)] if argv and argv[0] != "analyze" and "--bogus" not in argv else []
    assert main(argv + extra) == 2


def test_malformed_trace_exit_2(tmp_path, capsys):
    p = tmp_path / "t.csv"
    p.write_text("# bounds,0,0,100,100\nnode_id,time_s,x_m,y_m\n1,5,1,1\n1,2,1,1\n")
    assert main(["analyze", "--trace", str(p), "--out", str(tmp_path)]) == 2
    assert "node 1" in capsys.readouterr().err


def test_floating_and_generate(tmp_path):
    out = str(tmp_path / "f")
    assert main(["floating", "--tolerance", "120", "--replications", "2", "--out", out] + SMALL) == 0
    agg = _json(os.path.join(out, "floating_aggregate.json"))
    assert agg["runs"] == 2 and 0 <= agg["delivery_ratio_mean"] <= 1
    trace = str(tmp_path / "g" / "trace.csv")
    assert main(["generate", "-o", trace, "--seed", "3"] + SMALL) == 0
    assert main(["periodic", "--trace", trace, "--whom", "gps-density", "--period", "120",
                 "--out", str(tmp_path / "p")]) == 0


def test_sweep_writes_51_families(tmp_path):
    assert len(sweep_families()) == 51
    out = str(tmp_path / "s")
    assert main(["sweep", "--period", "120", "--out", out] + SMALL) == 0
    with open(os.path.join(out, "sweep_families.csv")) as fh:
        assert len(list(csv.reader(fh))) - 1 == 51
    with open(os.path.join(out, "sweep_matrix.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "whom" and len(rows) == 8 and all(len(r) == 8 for r in rows)
    summ = _json(os.path.join(out, "sweep_summary.json"))
    assert summ["families"] == 51 and summ["offload_ratio_mean"]["-|infra-only"] == 0.0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pushtrack", "generate", "--horizon", "60", "-o",
                        str(tmp_path / "t.csv")], capture_output=True, text=True)
    assert r.returncode == 0 and "wrote" in r.stdout
