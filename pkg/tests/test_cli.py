import json

from congest_apsp.cli import main
from congest_apsp.graphs import dump_json, path_graph


def test_verify_path_graph(capsys):
    assert main(["verify", "--gen", "path:8", "--h", "2"]) == 0
    assert "verified" in capsys.readouterr().out


def test_run_writes_metrics_and_distances(tmp_path):
    mfile = tmp_path / "m.json"
    dfile = tmp_path / "d.csv"
    rc = main(["run", "--gen", "gnp:10:0.3:5", "--h", "2", "--seed", "3",
               "--metrics", str(mfile), "--distances", str(dfile)])
    assert rc == 0
    data = json.loads(mfile.read_text())
    # one record per pipeline step
    assert [s["name"] for s in data["steps"]] == [
        "step1_csssp", "step2_blocker", "step3_in_sssp", "step4_matrix",
        "step5_closure", "step6_qsink", "step7_extension"]
    assert data["totals"]["rounds"] == sum(p["rounds"] for p in data["phases"])
    # full resolved configuration embedded
    assert data["config"]["h"] == 2 and data["config"]["seed"] == 3
    rows = dfile.read_text().strip().split("\n")
    assert len(rows) == 10 and all(len(r.split(",")) == 10 for r in rows)


def test_run_on_graph_file(tmp_path):
    gfile = tmp_path / "g.json"
    dump_json(path_graph(5), str(gfile))
    assert main(["run", "--graph", str(gfile), "--h", "1"]) == 0


def test_deterministic_outputs(tmp_path):
    outs = []
    for tag in ("a", "b"):
        mfile = tmp_path / f"{tag}.json"
        dfile = tmp_path / f"{tag}.csv"
        assert main(["run", "--gen", "gnp:12:0.3:6", "--h", "2", "--seed", "7",
                     "--metrics", str(mfile), "--distances", str(dfile)]) == 0
        outs.append((mfile.read_bytes(), dfile.read_bytes()))
    assert outs[0] == outs[1]


def test_gen_roundtrip(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen", "--gen", "gnp:9:0.4:4", "--seed", "2",
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["n"] == 9
    assert main(["verify", "--graph", str(out), "--h", "2"]) == 0


def test_sweep_rows(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", "--ns", "8,12,16", "--seed", "1", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("n,total_rounds")
    ns = [int(line.split(",")[0]) for line in lines[1:]]
    assert ns == [8, 12, 16]


def test_config_error_exit_code():
    assert main(["run", "--gen", "blob:4"]) == 2
    assert main(["run", "--gen", "path:4", "--h", "9"]) == 2
    assert main(["run", "--gen", "path:4", "--epsilon", "x/y"]) == 2
    assert main(["run", "--gen", "path:4", "--bandwidth", "0"]) == 2


def test_bad_fraction_range():
    assert main(["run", "--gen", "path:4", "--epsilon", "1/2"]) == 2
