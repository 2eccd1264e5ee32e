"""Configuration-driven experiment runner.

One JSON config per run, no prompts.  Every run writes a manifest carrying
the config hash, package version, and seeds; artifacts embed the same hash
so `report` can refuse mixed directories.  Reruns with identical configs
reproduce artifacts byte for byte (no timestamps in outputs).

Commands: classify, solve, propagate, simulate, verify, report.
Exit codes: 0 success, 2 config/schema or manifest errors, 3 gate refusal
(with the probe report on disk), 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, fields, sde, solver
from .grids import LatticeGrid, load_lattice, save_lattice
from .morrey import default_cylinder_sampling, morrey_norm
from .solver import DivergenceError, GateRefusalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GATE = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


def _fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _require(config: dict, keys: list[str], command: str):
    missing = [k for k in keys if k not in config]
    if missing:
        raise ConfigError(f"{command}: missing config keys {missing}")


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _grid_from(config: dict) -> LatticeGrid:
    g = config.get("grid")
    if not isinstance(g, dict):
        raise ConfigError("config needs a 'grid' object")
    try:
        return LatticeGrid.from_meta(g)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def _field_from(config: dict, key: str = "field") -> fields.FieldSpec:
    doc = config.get(key)
    if not isinstance(doc, dict):
        raise ConfigError(f"config needs a '{key}' object")
    try:
        return fields.spec_from_dict(doc, lattice_loader=load_lattice)
    except fields.FieldConfigError as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(config: dict) -> Path:
    out = Path(config.get("output_dir", "runs/out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: dict, seeds: list[int]):
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "version": __version__,
        "seeds": seeds,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True))
    return manifest


def _write_dictionary(out: Path, entries: dict[str, dict[str, str]]):
    (out / "data_dictionary.json").write_text(
        json.dumps(entries, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_classify(config: dict) -> int:
    _require(config, ["field", "params"], "classify")
    spec = _field_from(config)
    params = config["params"]
    qs = params.get("q_values", [1.2, 1.5, 2.0])
    out = _out_dir(config)
    _write_manifest(out, "classify", config, seeds=[])
    sampling_set = default_cylinder_sampling(
        fields.field_dimension(spec),
        r_min=params.get("r_min", 0.125),
        n_radii=params.get("n_radii", 5),
        nodes=params.get("nodes", 1000))
    rows = []
    chash = config_hash(config)
    for q in qs:
        est = morrey_norm(spec, q, sampling_set)
        rows.append([q, est.value, est.stderr, est.argmax_radius, chash])
    write_csv(out / "morrey_norms.csv",
              ["q", "norm_lower_bound", "stderr", "argmax_radius", "config_hash"],
              rows)
    _write_dictionary(out, {"morrey_norms.csv": {
        "q": "integrability parameter of the cylinder average",
        "norm_lower_bound": "max of r (avg |b|^q)^{1/q} over the sampling",
        "stderr": "quadrature refinement delta",
        "argmax_radius": "radius attaining the max",
        "config_hash": "hash tying the row to the manifest",
    }})
    return EXIT_OK


def cmd_solve(config: dict) -> int:
    _require(config, ["field", "grid", "params"], "solve")
    spec = _field_from(config)
    grid = _grid_from(config)
    p = config["params"]
    out = _out_dir(config)
    seed = int(p.get("seed", 7))
    _write_manifest(out, "solve", config, seeds=[seed])
    if "forcing_file" in p:
        f, f_grid, _ = load_lattice(p["forcing_file"])
        if f_grid.fingerprint() != grid.fingerprint():
            raise ConfigError("forcing lattice grid differs from config grid")
    else:
        f = acceptance._time_interior_bump(grid)
    try:
        rep = solver.neumann_solve(
            spec, f, p=float(p.get("p", 2.0)), lam=float(p.get("lambda", 16.0)),
            grid=grid, K=int(p.get("K", 12)), tol=float(p.get("tol", 1e-8)),
            probes=int(p.get("probes", 24)), seed=seed)
    except GateRefusalError as exc:
        (out / "gate_refusal.json").write_text(
            json.dumps(exc.report.to_json(), indent=2, sort_keys=True))
        return EXIT_GATE
    except DivergenceError as exc:
        (out / "divergence.json").write_text(
            json.dumps({"error": str(exc)}, indent=2))
        return EXIT_NUMERICAL
    rep.save(out / "solve")
    return EXIT_OK


def cmd_propagate(config: dict) -> int:
    _require(config, ["field", "grid", "params"], "propagate")
    spec = _field_from(config)
    grid = _grid_from(config)
    p = config["params"]
    out = _out_dir(config)
    seed = int(p.get("seed", 7))
    _write_manifest(out, "propagate", config, seeds=[seed])
    if "initial_file" in p:
        g, g_grid, _ = load_lattice(p["initial_file"])
    else:
        from .bumps import SpatialBump

        g = SpatialBump((0.0,) * grid.dimension,
                        (0.5 * grid.half_width,) * grid.dimension).value(
            grid.space_points())
    try:
        rep = solver.cauchy_propagate(
            spec, g, r=float(p.get("r", grid.t0)), p=float(p.get("p", 6.0)),
            lam=float(p.get("lambda", 4.0)), grid=grid,
            K=int(p.get("K", 12)), probes=int(p.get("probes", 24)), seed=seed)
    except GateRefusalError as exc:
        (out / "gate_refusal.json").write_text(
            json.dumps(exc.report.to_json(), indent=2, sort_keys=True))
        return EXIT_GATE
    except DivergenceError as exc:
        (out / "divergence.json").write_text(
            json.dumps({"error": str(exc)}, indent=2))
        return EXIT_NUMERICAL
    save_lattice(out / "propagation_v", rep.v.values, grid,
                 meta={"config_hash": config_hash(config)})
    (out / "propagate.json").write_text(
        json.dumps(rep.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(config: dict) -> int:
    _require(config, ["field", "params"], "simulate")
    spec = _field_from(config)
    p = config["params"]
    _require(p, ["x0", "t_max", "dt", "n_paths", "seed", "level"],
             "simulate params")
    out = _out_dir(config)
    cfg = sde.EulerConfig(x0=tuple(p["x0"]), t_max=float(p["t_max"]),
                          dt=float(p["dt"]), n_paths=int(p["n_paths"]),
                          seed=int(p["seed"]), level=float(p["level"]))
    _write_manifest(out, "simulate", config, seeds=[cfg.seed])
    ens = sde.simulate(cfg, spec, head=int(p.get("head", 16)))
    summary = ens.to_json()
    chash = config_hash(config)
    summary["config_hash"] = chash
    if p.get("windows"):
        fit = sde.krylov_fit(spec, cfg, windows=p["windows"], ens=ens)
        summary["krylov_fit"] = fit.to_json()
        write_csv(out / "krylov.csv",
                  ["window", "estimate", "stderr", "fit_C", "fit_gamma",
                   "config_hash"],
                  [[w, e, s, fit.C, fit.gamma, chash]
                   for w, e, s in zip(fit.windows, fit.estimates, fit.stderrs)])
    (out / "ensemble.json").write_text(json.dumps(summary, indent=2,
                                                  sort_keys=True))
    if p.get("dump_head_paths") and ens.head_paths is not None:
        hp = ens.head_paths
        head_grid_meta = {"dt": cfg.dt, "n_steps": cfg.n_steps}
        np.ascontiguousarray(hp, dtype="<f8").tofile(out / "head_paths.f64")
        (out / "head_paths.json").write_text(json.dumps(
            {"shape": list(hp.shape), "dtype": "<f8", "byteorder": "little",
             "meta": head_grid_meta, "config_hash": chash}, indent=2))
    return EXIT_OK


_VERIFY_SUITES = {
    "kernels": [1, 2],
    "morrey": [6, 7],
    "solver": [3, 4, 5, 13],
    "sde": [9, 10, 11, 12],
    "all": sorted(acceptance.CRITERIA),
}


def cmd_verify(config: dict) -> int:
    suite = config.get("suite", "all")
    if suite not in _VERIFY_SUITES:
        raise ConfigError(f"unknown suite {suite!r}; "
                          f"choose from {sorted(_VERIFY_SUITES)}")
    out = _out_dir(config)
    _write_manifest(out, "verify", config, seeds=[acceptance.SEED])
    import time

    rows = []
    reports = {}
    for k in _VERIFY_SUITES[suite]:
        t0 = time.monotonic()
        rep = acceptance.CRITERIA[k]()
        wall = time.monotonic() - t0
        reports[k] = rep
        rows.append([k, rep["name"], "PASS" if rep["pass"] else "FAIL", wall,
                     config_hash(config)])
        print(f"criterion {k:2d} [{rep['name']}]: "
              f"{'PASS' if rep['pass'] else 'FAIL'}")
    write_csv(out / "verify.csv",
              ["criterion", "name", "status", "wall_seconds", "config_hash"],
              rows)
    (out / "verify.json").write_text(json.dumps(
        {str(k): v for k, v in reports.items()}, indent=2, sort_keys=True,
        default=float))
    return EXIT_OK if all(r[2] == "PASS" for r in rows) else 1


def cmd_report(config: dict) -> int:
    run_dir = Path(config.get("run_dir", config.get("output_dir", "")))
    if not run_dir.is_dir():
        raise ConfigError(f"run directory {run_dir} does not exist")
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError("run directory has no manifest")
    manifest = json.loads(manifest_path.read_text())
    chash = manifest["config_hash"]
    rows = []
    for path in sorted(run_dir.glob("*.json")):
        if path.name in ("manifest.json", "data_dictionary.json"):
            continue
        doc = json.loads(path.read_text())
        embedded = _find_hashes(doc)
        if any(h != chash for h in embedded):
            raise ConfigError(f"artifact {path.name} carries a foreign "
                              f"config hash; refusing mixed run directory")
        rows.append([path.name, _summary_of(doc), chash])
    out = run_dir / "report.csv"
    write_csv(out, ["artifact", "summary", "config_hash"], rows)
    print(f"wrote {out} with {len(rows)} artifact rows")
    return EXIT_OK


def _find_hashes(doc) -> list[str]:
    found = []
    if isinstance(doc, dict):
        for k, v in doc.items():
            if k == "config_hash" and isinstance(v, str):
                found.append(v)
            else:
                found.extend(_find_hashes(v))
    elif isinstance(doc, list):
        for v in doc:
            found.extend(_find_hashes(v))
    return found


def _summary_of(doc) -> str:
    if isinstance(doc, dict):
        for key in ("pass", "terms_used", "gamma", "max_gap", "value"):
            if key in doc:
                return f"{key}={doc[key]}"
        return f"keys={len(doc)}"
    return "list"


_COMMANDS = {
    "classify": (cmd_classify, ["field", "params"]),
    "solve": (cmd_solve, ["field", "grid", "params"]),
    "propagate": (cmd_propagate, ["field", "grid", "params"]),
    "simulate": (cmd_simulate, ["field", "params"]),
    "verify": (cmd_verify, []),
    "report": (cmd_report, []),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="morreylab",
        description="Numerical laboratory for parabolic equations and SDEs "
                    "with Morrey-class singular drift")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cp = sub.add_parser(name)
        cp.add_argument("config", help="path to the JSON run config")
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        declared = config.get("command")
        if declared is not None and declared != args.command:
            raise ConfigError(f"config declares command {declared!r} but "
                              f"{args.command!r} was invoked")
        handler, _required = _COMMANDS[args.command]
        return handler(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GateRefusalError,) as exc:  # pragma: no cover - handled in cmds
        print(f"gate refusal: {exc}", file=sys.stderr)
        return EXIT_GATE
    except DivergenceError as exc:  # pragma: no cover
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
