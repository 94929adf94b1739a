import json
import subprocess
import sys

import pytest
from hypothesis import given

from itmlab.cli import (
    EXIT_DATA, EXIT_STABLE, EXIT_UNDECIDED, EXIT_UNSTABLE, EXIT_USAGE, PALETTE, main,
)
from itmlab.corpus import M2, M3, NAMED, random_corpus
from itmlab.mapfile import MapFileError, dumps_map, loads_map, read_map, write_map
from strategies import maps


@pytest.fixture
def mapfile(tmp_path):
    def make(p, name="map.json"):
        path = tmp_path / name
        write_map(path, p)
        return str(path)
    return make


def run_json(capsys, argv):
    code = main(argv + ["--format", "json"])
    return code, json.loads(capsys.readouterr().out)


def test_analyze_m2(mapfile, capsys):
    code, rec = run_json(capsys, ["analyze", mapfile(M2)])
    assert code == EXIT_STABLE
    assert rec["stability"]["verdict"] == "stable"
    assert rec["attractor"]["X"] == [["0", "3/4"]]
    assert rec["unstable_number"] == 0


def test_analyze_m3(mapfile, capsys):
    code, rec = run_json(capsys, ["analyze", mapfile(M3)])
    assert code == EXIT_UNSTABLE
    assert rec["ghost_graph"]["a3_violations"] == ["b1-", "b2+"]
    assert rec["stability"]["a3"] == {"pass": False, "witness": ["b1-", "b2+"]}


def test_analyze_undecided_budget(mapfile, capsys):
    code, rec = run_json(capsys, ["analyze", mapfile(M3), "--budget", "2"])
    assert code == EXIT_UNDECIDED and rec["stability"]["verdict"] == "undecided"


def test_analyze_text_output(mapfile, capsys):
    assert main(["analyze", mapfile(M2)]) == EXIT_STABLE
    out = capsys.readouterr().out
    assert "verdict: stable" in out


def test_malformed_rational(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"r": 2, "beta": ["0", "1/0", "1"], "gamma": ["0", "0"]}')
    assert main(["analyze", str(path)]) == EXIT_USAGE
    assert "beta[1]" in capsys.readouterr().err


def test_mapfile_diagnostics():
    with pytest.raises(MapFileError, match="line 1"):
        loads_map('{"r": 2,')
    with pytest.raises(MapFileError, match="missing field 'gamma'"):
        loads_map('{"r": 2, "beta": ["0", "1/2", "1"]}')
    with pytest.raises(MapFileError, match="gamma_high"):
        loads_map('{"r": 2, "beta": ["0", "1/2", "1"], "gamma": ["3/4", "0"]}')
    with pytest.raises(MapFileError, match="expected 3 entries"):
        loads_map('{"r": 2, "beta": ["0", "1"], "gamma": ["0", "0"]}')


def test_missing_file(capsys):
    assert main(["analyze", "/nonexistent/map.json"]) == EXIT_USAGE


def test_usage_errors(mapfile, capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["perturb", mapfile(M3), "--eps", "0"]) == EXIT_USAGE


@given(maps())
def test_roundtrip(p):
    assert loads_map(dumps_map(p)) == p
    assert dumps_map(loads_map(dumps_map(p))) == dumps_map(p)


def test_roundtrip_corpus(tmp_path):
    for k, p in enumerate(list(NAMED.values()) + random_corpus(5, 30)):
        path = tmp_path / f"m{k}.json"
        write_map(path, p)
        assert read_map(path) == p


def test_vectors_m2(mapfile, capsys):
    code, rec = run_json(capsys, ["vectors", mapfile(M2), "--component", "0"])
    assert code == 0
    b = rec["bundle"]
    assert b["L1"] == {"e": [0, 0], "f": [-1]}
    assert b["R1+"] == {"e": [0, 1], "f": [1]}
    assert b["R1-"] == {"e": [1, 0], "f": [1]}
    assert b["R0+"] == {"e": [1, 0], "f": [0]}
    assert b["R2-"] == {"e": [0, 1], "f": [0]}
    assert rec["identities"]["pass"]


def test_vectors_m3(mapfile, capsys):
    code, rec = run_json(capsys, ["vectors", mapfile(M3)])
    assert code == 0 and rec["N"] == 1 and "skipped" in rec["independence"]


def test_vectors_out_of_range(mapfile, capsys):
    assert main(["vectors", mapfile(M2), "--component", "5"]) == EXIT_DATA


def test_perturb_m2_unchanged(mapfile, tmp_path, capsys):
    out = tmp_path / "out.json"
    assert main(["perturb", mapfile(M2), "--out", str(out)]) == 0
    assert read_map(out) == M2


def test_perturb_m3_fresh_analysis(mapfile, tmp_path, capsys):
    out = tmp_path / "out.json"
    assert main(["perturb", mapfile(M3), "--out", str(out)]) == 0
    proc = subprocess.run([sys.executable, "-m", "itmlab", "analyze", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def scan_args(mapfile, tmp_path, tag, workers, extra=()):
    return ["scan", mapfile(M2), "--x", "gamma1", "--x-range", "0:1/2",
            "--y", "gamma2", "--y-range=-1/2:0", "--n", "2", "--depth", "full",
            "--workers", str(workers), "--csv", str(tmp_path / f"{tag}.csv"),
            "--ppm", str(tmp_path / f"{tag}.ppm"), *extra]


def test_scan_two_by_two(mapfile, tmp_path, capsys):
    assert main(scan_args(mapfile, tmp_path, "a", 1)) == 0
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "i,j,beta,gamma,verdict,n_star_or_budget,stability"
    rows = lines[1:]
    assert len(rows) == 4 and all(",finite," in r for r in rows)
    ppm = (tmp_path / "a.ppm").read_text().splitlines()
    assert ppm[0] == "P3" and ppm[2] == "2 2"


def test_scan_infeasible_cell(mapfile, tmp_path, capsys):
    argv = ["scan", mapfile(M2), "--x", "gamma1", "--x-range", "0:2", "--y", "gamma2",
            "--y-range=-1/2:0", "--n", "2", "--csv", str(tmp_path / "c.csv"),
            "--ppm", str(tmp_path / "c.ppm")]
    assert main(argv) == 0
    text = (tmp_path / "c.csv").read_text()
    assert ",infeasible," in text
    assert " ".join(map(str, PALETTE["infeasible"])) in (tmp_path / "c.ppm").read_text()


def test_scan_worker_determinism(mapfile, tmp_path, capsys):
    assert main(scan_args(mapfile, tmp_path, "one", 1, ["--n", "6"])) == 0
    assert main(scan_args(mapfile, tmp_path, "many", 8, ["--n", "6"])) == 0
    for ext in ("csv", "ppm"):
        assert (tmp_path / f"one.{ext}").read_bytes() == (tmp_path / f"many.{ext}").read_bytes()


def test_scan_bad_axis(mapfile, tmp_path, capsys):
    argv = ["scan", mapfile(M2), "--x", "gamma9", "--x-range", "0:1", "--y", "gamma2",
            "--y-range=-1/2:0", "--csv", str(tmp_path / "x.csv")]
    assert main(argv) == EXIT_USAGE
