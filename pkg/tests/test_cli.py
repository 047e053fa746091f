import csv
import json

import numpy as np
import pytest

from hss.cli import main, parse_rank_ranges
from hss.codec import decode_hier_cp, load_encoding
from hss.pattern import as_pattern
from hss.tensor import EXACT, MaskedTensor, conforms, load_tensor, save_tensor


def read_rows(path):
    text = path.read_text().split("\n\n")[0]
    return list(csv.DictReader(text.splitlines()))


def test_degrees(capsys):
    assert main(["degrees", "--ranks", "2:2..8,2:2..4", "--json"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["count"] == 15 and "1/8" in obj["densities"]
    assert main(["degrees", "--ranks", "2:2..16"]) == 0
    assert "15 distinct" in capsys.readouterr().out
    assert main(["degrees", "--ranks", "2:9..3"]) == 1
    assert len(parse_rank_ranges("1:4")) == 1


def write_workload(tmp_path, **obj):
    path = tmp_path / "w.json"
    path.write_text(json.dumps({"m": 32, "k": 32, "n": 8, **obj}))
    return str(path)


def test_simulate_exit_codes(tmp_path, capsys):
    wl = write_workload(tmp_path, a_pattern="C1(2:4)->C0(2:4)", b_density="1/2")
    assert main(["simulate", "--workload", wl]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["design"] == "highlight" and rep["edp"] > 0
    assert rep["energy"]["total_pj"] * rep["cycles"] == pytest.approx(rep["edp"])
    bad = write_workload(tmp_path, k=64, a_pattern="C1(2:16)->C0(2:4)")
    assert main(["simulate", "--workload", bad]) == 2
    assert main(["simulate", "--workload", str(tmp_path / "missing.json")]) == 1
    unstructured = write_workload(tmp_path, a_density="0.5", b_density="0.5")
    assert main(["simulate", "--workload", unstructured, "--design", "s2ta"]) == 2


def test_sweep_grid(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--size", "64", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 12 * 6
    assert "GEOMEAN" in out.read_text()
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["rows"][0]["id"] == rows[0]["id"]
    for r in rows:
        if r["supported"] == "true":
            assert float(r["edp"]) == pytest.approx(float(r["energy_total_pj"]) * int(r["cycles"]))
            assert float(r["ed2"]) == pytest.approx(float(r["edp"]) * int(r["cycles"]))
        else:
            assert r["cycles"] == ""
    again = tmp_path / "t.csv"
    main(["sweep", "--size", "64", "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_sweep_dense_speedup_and_overrides(tmp_path):
    man = tmp_path / "m.json"
    man.write_text(json.dumps({"workloads": [{"m": 32, "k": 32, "n": 8, "a_pattern": "C"}],
                               "designs": ["tc", "highlight"], "out": "r.csv"}))
    assert main(["sweep", "--manifest", str(man)]) == 0
    rows = read_rows(tmp_path / "r.csv")
    assert [float(r["speedup_vs_tc"]) for r in rows] == [1.0, 1.0]
    assert main(["sweep", "--manifest", str(man), "--designs", ""]) == 1
    assert main(["sweep", "--manifest", str(man), "--designs", "nope"]) == 1


def test_sweep_strict(tmp_path):
    man = tmp_path / "m.json"
    man.write_text(json.dumps({"workloads": [{"m": 32, "k": 32, "n": 8, "a_pattern": "C"}],
                               "designs": ["s2ta"], "out": "r.csv"}))
    assert main(["sweep", "--manifest", str(man)]) == 0
    assert read_rows(tmp_path / "r.csv")[0]["supported"] == "false"
    assert main(["sweep", "--manifest", str(man), "--strict"]) == 2


def test_sparsify_encode_pipeline(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = tmp_path / "t.bin"
    save_tensor(src, MaskedTensor.dense(rng.integers(1, 9, (4, 32)).astype(float)))
    pruned = tmp_path / "p.bin"
    assert main(["sparsify", "--in", str(src), "--pattern", "C1(2:4)->C0(2:4)",
                 "--out", str(pruned)]) == 0
    t = load_tensor(pruned)
    assert conforms(t, as_pattern("C1(2:4)->C0(2:4)"), EXACT)
    enc = tmp_path / "p.hcp"
    assert main(["encode", "--in", str(pruned), "--format", "hiercp", "--out", str(enc)]) == 0
    assert decode_hier_cp(load_encoding(enc)).same_as(t)
    assert main(["encode", "--in", str(pruned), "--format", "bcsr", "--out",
                 str(tmp_path / "p.bcsr")]) == 0
    assert main(["sparsify", "--in", str(src), "--pattern", "C0(2:5)", "--out", str(pruned)]) == 1
    assert main(["sparsify", "--in", str(src), "--pattern", "C0(", "--out", str(pruned)]) == 1
