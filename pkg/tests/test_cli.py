import json
from pathlib import Path

import numpy as np
import pytest

from morreylab.cli import EXIT_CONFIG, EXIT_GATE, main


def _write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


SMALL_GRID = {"dimension": 3, "half_width": 1.0, "dx": 0.25,
              "t0": 0.0, "t1": 0.16, "dt": 0.01}


def test_classify_writes_monotone_csv(tmp_path):
    cfg = _write(tmp_path, "c.json", {
        "command": "classify",
        "field": {"kind": "hardy", "delta": 1.0, "dimension": 3},
        "params": {"q_values": [1.2, 1.5, 2.0], "nodes": 400, "n_radii": 3},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["classify", cfg]) == 0
    lines = (tmp_path / "out" / "morrey_norms.csv").read_text().splitlines()
    assert lines[0].startswith("q,")
    vals = [float(line.split(",")[1]) for line in lines[1:]]
    assert vals[0] <= vals[1] <= vals[2]
    assert (tmp_path / "out" / "manifest.json").exists()
    assert (tmp_path / "out" / "data_dictionary.json").exists()


def test_solve_and_report_roundtrip(tmp_path):
    out = tmp_path / "run"
    cfg = _write(tmp_path, "s.json", {
        "command": "solve",
        "field": {"kind": "constant", "vector": [0.2, 0.0, 0.0]},
        "grid": SMALL_GRID,
        "params": {"p": 2.0, "lambda": 8.0, "seed": 5, "probes": 16},
        "output_dir": str(out),
    })
    assert main(["solve", cfg]) == 0
    assert (out / "solve.json").exists()
    assert (out / "solve_u.f64").exists()
    rcfg = _write(tmp_path, "r.json", {"command": "report", "run_dir": str(out)})
    assert main(["report", rcfg]) == 0
    assert (out / "report.csv").exists()


def test_solve_gate_refusal_exit_code(tmp_path):
    out = tmp_path / "run"
    cfg = _write(tmp_path, "g.json", {
        "command": "solve",
        "field": {"kind": "hardy", "delta": 100.0, "dimension": 3},
        "grid": {"dimension": 3, "half_width": 2.0, "dx": 0.25,
                 "t0": 0.0, "t1": 0.64, "dt": 0.01},
        "params": {"p": 2.0, "lambda": 1.0, "seed": 5, "probes": 16},
        "output_dir": str(out),
    })
    assert main(["solve", cfg]) == EXIT_GATE
    assert (out / "gate_refusal.json").exists()
    assert not (out / "solve_u.f64").exists()


def test_schema_violations_exit_2(tmp_path):
    bad = _write(tmp_path, "bad.json", {"command": "solve"})
    assert main(["solve", bad]) == EXIT_CONFIG
    mismatched = _write(tmp_path, "mm.json", {
        "command": "classify",
        "field": {"kind": "constant", "vector": [0.0, 0.0, 0.0]},
        "params": {},
    })
    assert main(["solve", mismatched]) == EXIT_CONFIG
    missing = str(tmp_path / "nope.json")
    assert main(["solve", missing]) == EXIT_CONFIG


def test_report_refuses_missing_manifest(tmp_path):
    (tmp_path / "empty").mkdir()
    cfg = _write(tmp_path, "r.json", {"command": "report",
                                      "run_dir": str(tmp_path / "empty")})
    assert main(["report", cfg]) == EXIT_CONFIG


def test_report_refuses_mixed_hashes(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / "manifest.json").write_text(json.dumps({"config_hash": "aaaa"}))
    (out / "artifact.json").write_text(json.dumps({"config_hash": "bbbb"}))
    cfg = _write(tmp_path, "r.json", {"command": "report", "run_dir": str(out)})
    assert main(["report", cfg]) == EXIT_CONFIG


def test_simulate_reproducible_artifacts(tmp_path):
    doc = {
        "command": "simulate",
        "field": {"kind": "constant", "vector": [0.5, 0.0, 0.0]},
        "params": {"x0": [0.0, 0.0, 0.0], "t_max": 0.2, "dt": 0.01,
                   "n_paths": 500, "seed": 9, "level": 2.0,
                   "windows": [0.025, 0.05, 0.1, 0.2]},
        "output_dir": str(tmp_path / "out"),
    }
    cfg = _write(tmp_path, "sim.json", doc)
    assert main(["simulate", cfg]) == 0
    first = (tmp_path / "out" / "ensemble.json").read_bytes()
    first_csv = (tmp_path / "out" / "krylov.csv").read_bytes()
    assert main(["simulate", cfg]) == 0
    assert (tmp_path / "out" / "ensemble.json").read_bytes() == first
    assert (tmp_path / "out" / "krylov.csv").read_bytes() == first_csv


def test_propagate_writes_lattice(tmp_path):
    out = tmp_path / "run"
    cfg = _write(tmp_path, "p.json", {
        "command": "propagate",
        "field": {"kind": "constant", "vector": [0.0, 0.0, 0.0]},
        "grid": SMALL_GRID,
        "params": {"p": 6.0, "lambda": 4.0, "seed": 5, "probes": 16},
        "output_dir": str(out),
    })
    assert main(["propagate", cfg]) == 0
    from morreylab.grids import load_lattice

    values, grid, meta = load_lattice(out / "propagation_v")
    assert values.shape == grid.shape
    assert "config_hash" in meta
