"""Desk-scale acceptance criteria.

Each criterion is a deterministic function returning a JSON-serializable
report with a boolean "pass".  Criterion 14 reruns the others against
cleared caches and demands byte-identical reports.

Criterion 8 carries a known-red clause: for a time-independent field the
windowed weighted norm grows exactly linearly, so its fitted exponent is 1
rather than the chained-majorant exponent 1/q'; the report carries both
readings and the majorant fit, and the pass flag is honest.
"""

from __future__ import annotations

import json

import numpy as np

from . import fields, potentials, sampling, sde, solver
from .bumps import SpatialBump, SpaceTimeBump, psi
from .grids import LatticeGrid
from .morrey import (
    CylinderSampling,
    ParabolicCylinder,
    cylinder_functional,
    default_cylinder_sampling,
    dyadic_radii,
    morrey_norm,
)

SEED = 20260808

DESK_GRID = LatticeGrid(3, 2.0, 0.25, 0.0, 0.64, 0.01)  # 17^3 x 65 nodes

ZERO3 = fields.ConstantField((0.0, 0.0, 0.0))


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _interior(grid: LatticeGrid, space_margin=4, time_margin=2):
    return grid.interior_slices(space_margin, time_margin)


def _time_interior_bump(grid: LatticeGrid, xw=1.2) -> np.ndarray:
    tspan = grid.t1 - grid.t0
    return SpaceTimeBump(grid.t0 + 0.56 * tspan, 0.48 * tspan,
                         SpatialBump((0.0,) * grid.dimension,
                                     (xw,) * grid.dimension)).on_grid(grid)


# ---------------------------------------------------------------------------

def criterion_01_kernel_normalization() -> dict:
    grid = DESK_GRID
    rows = []
    ones = np.ones(grid.shape)
    for alpha in (0.5, 1.0, 1.5, 2.0):
        for lam in (1.0, 4.0):
            plan = potentials.build_kernel_plan(grid, "forward", alpha, lam)
            out = potentials.potential_apply(plan, ones)
            rel = float(np.abs(out * lam ** (alpha / 2) - 1.0).max())
            rows.append({"alpha": alpha, "lambda": lam, "max_rel_dev": rel,
                         "pass": bool(rel < 1e-3)})
    return {"criterion": 1, "name": "kernel_normalization", "tolerance": 1e-3,
            "rows": rows, "pass": bool(all(r["pass"] for r in rows))}


def criterion_02_semigroup_composition() -> dict:
    grid = DESK_GRID
    h = _time_interior_bump(grid)
    cut = _interior(grid)
    rows = []
    for (al, be) in ((0.5, 0.5), (0.5, 1.0), (1.0, 1.0)):
        for lam in (1.0, 4.0):
            pa = potentials.build_kernel_plan(grid, "forward", al, lam)
            pb = potentials.build_kernel_plan(grid, "forward", be, lam)
            pc = potentials.build_kernel_plan(grid, "forward", al + be, lam)
            lhs = potentials.potential_apply(pa, potentials.potential_apply(pb, h))
            rhs = potentials.potential_apply(pc, h)
            dev = float(np.abs(lhs - rhs)[cut].max() / np.abs(rhs[cut]).max())
            rows.append({"alpha": al, "beta": be, "lambda": lam,
                         "interior_rel_dev": dev, "pass": bool(dev <= 1e-3)})
    return {"criterion": 2, "name": "semigroup_composition", "tolerance": 1e-3,
            "rows": rows, "pass": bool(all(r["pass"] for r in rows))}


def criterion_03_zero_drift_degeneration() -> dict:
    grid = DESK_GRID
    f = _time_interior_bump(grid)
    rep = solver.neumann_solve(ZERO3, f, p=2.0, lam=4.0, grid=grid, seed=SEED,
                               with_residual=False)
    plan = potentials.build_kernel_plan(grid, "forward", 2.0, 4.0)
    exact = bool(np.array_equal(rep.u.values,
                                potentials.potential_apply(plan, f)))
    zero_terms = bool(rep.terms_used == 0)

    ratios = {}
    res = []
    for (dx, dt) in ((0.25, 0.02), (0.125, 0.01)):
        g = LatticeGrid(3, 2.0, dx, 0.0, 0.32, dt)
        u_star, f_mms, b_lat = solver.manufactured_problem(g, ZERO3, lam=1.0)
        u = solver.time_stepping_reference(b_lat, g, lam=1.0, f=f_mms,
                                           g0=u_star[0])
        r = solver.pde_residual(u, b_lat, f_mms, 1.0, space_margin=3)
        res.append(r)
    ratios = {"p_norm": res[0]["p_norm"] / res[1]["p_norm"],
              "sup": res[0]["sup"] / res[1]["sup"]}
    ok = bool(exact and zero_terms and ratios["p_norm"] >= 2.0
              and ratios["sup"] >= 2.0)
    return {"criterion": 3, "name": "zero_drift_degeneration",
            "series_terms": rep.terms_used, "equals_resolvent": exact,
            "residuals": res, "refinement_ratios": ratios, "pass": ok}


def criterion_04_contraction_gate() -> dict:
    grid = DESK_GRID
    b = fields.HardyField(0.04, 3)
    p, q = 2.0, 1.5
    lambdas = (1.0, 4.0, 16.0, 64.0)
    gates = []
    last_ops = None
    for lam in lambdas:
        ops = potentials.DriftOperators(b, grid, p, lam)
        rep = potentials.probe_operator_norm(lambda x: ops.T(x), p, grid,
                                             probes=64, seed=SEED, lam=lam,
                                             operator_id="T_p")
        gates.append(rep)
        last_ops = ops
    ratios = [g.ratio for g in gates]
    decreasing = bool(all(a > b2 for a, b2 in zip(ratios, ratios[1:])))
    below_one = bool(ratios[-1] < 1.0)
    f = _time_interior_bump(grid)
    rep = solver.neumann_solve(b, f, p=p, lam=lambdas[-1], grid=grid,
                               gate=gates[-1], ops=last_ops, seed=SEED,
                               with_residual=False, tol=1e-12, K=8)
    term_ratios = rep.term_ratios()
    terms_ok = bool(term_ratios and all(r < 1.0 for r in term_ratios))
    return {"criterion": 4, "name": "contraction_gate", "p": p, "q": q,
            "lambdas": list(lambdas), "gate_ratios": ratios,
            "strictly_decreasing": decreasing, "below_one_at_64": below_one,
            "series_term_ratios": term_ratios, "series_ratios_ok": terms_ok,
            "pass": bool(decreasing and below_one and terms_ok)}


def criterion_05_oracle_equivalence() -> dict:
    grid = DESK_GRID
    lam = 16.0
    b = fields.regularize(fields.HardyField(1.0, 3), 2.0)
    u_star, f_mms, b_lat = solver.manufactured_problem(grid, b, lam)
    march_mms = solver.time_stepping_reference(b_lat, grid, lam, f=f_mms,
                                               g0=u_star[0])
    oracle_err = float(np.abs(march_mms.values - u_star).max())

    f = _time_interior_bump(grid)
    rep = solver.neumann_solve(b, f, p=2.0, lam=lam, grid=grid, seed=SEED,
                               with_residual=False)
    march = solver.time_stepping_reference(b_lat, grid, lam, f=f)
    gap = float(np.abs(rep.u.values - march.values).max())
    return {"criterion": 5, "name": "oracle_equivalence", "lambda": lam,
            "oracle_mms_error": oracle_err, "solver_vs_march_gap": gap,
            "bound": 5.0 * oracle_err, "pass": bool(gap <= 5.0 * oracle_err)}


def criterion_06_morrey_properties() -> dict:
    q, q1 = 1.5, 2.0
    b = fields.HardyField(0.09, 3)
    sampling_set = default_cylinder_sampling(3, nodes=600)
    n1 = morrey_norm(b, q, sampling_set)
    n2 = morrey_norm(fields.ScaledField(2.0, b), q, sampling_set)
    homogeneity_dev = abs(n2.value - 2.0 * n1.value) / (2.0 * n1.value)
    nq1 = morrey_norm(b, q1, sampling_set)
    monotone = bool(n1.value <= nq1.value * (1 + 1e-12))

    lam_scale = 2.0
    b_scaled = fields.HardyField(0.09, 3, cutoff_radius=1.0 / lam_scale)
    r, anchor_t, anchor_x = 0.4, 0.0, (0.3, 0.0, 0.0)
    v1, _ = cylinder_functional(b, ParabolicCylinder(anchor_t, anchor_x, r), q)
    v2, _ = cylinder_functional(
        b_scaled, ParabolicCylinder(anchor_t / lam_scale**2,
                                    tuple(c / lam_scale for c in anchor_x),
                                    r / lam_scale), q)
    scaling_dev = abs(v2 - v1) / v1

    const = fields.ConstantField((0.7, 0.0, 0.0))
    r_max, n_radii = 8.0, 7
    s_const = CylinderSampling(dyadic_radii(r_max / 2 ** (n_radii - 1), n_radii),
                               ((0.0, (0.0, 0.0, 0.0)),), nodes=600)
    est = morrey_norm(const, q, s_const)
    const_dev = abs(est.value - r_max * 0.7) / (r_max * 0.7)

    ok = bool(homogeneity_dev < 1e-12 and monotone and scaling_dev <= 0.02
              and const_dev <= 0.01)
    return {"criterion": 6, "name": "morrey_properties",
            "homogeneity_rel_dev": float(homogeneity_dev),
            "q_monotone": monotone,
            "parabolic_scaling_rel_dev": float(scaling_dev),
            "constant_field_rel_dev": float(const_dev), "pass": ok}


def criterion_07_weight_inequalities() -> dict:
    grid = LatticeGrid(3, 2.0, 0.125, 0.0, 0.1, 0.0125)  # 33^3 spatial lattice
    pts = grid.space_points()
    rows = []
    for l in (0.01, 0.1):
        for nu in (2.0, 4.0):
            w = solver.WeightSpec(l, nu, (0.0, 0.0, 0.0))
            rep = solver.weight_inequality_report(w, pts)
            rep.update({"l": l, "nu": nu,
                        "pass": bool(rep["grad_ok"] and rep["lap_ok"])})
            rows.append(rep)
    return {"criterion": 7, "name": "weight_inequalities", "rows": rows,
            "pass": bool(all(r["pass"] for r in rows))}


def criterion_08_rho_fin_exponent() -> dict:
    w = solver.WeightSpec(0.05, 2.0, (0.0, 0.0, 0.0))
    const = solver.rho_fin_check(fields.ConstantField((1.0, 0.0, 0.0)),
                                 q=1.5, p=12.0, weight=w, r=0.0,
                                 T_values=(0.05, 0.1, 0.2, 0.4))
    const_ok = bool(abs(const["p_slope"] - 1.0) < 1e-2)
    hardy = solver.rho_fin_check(fields.HardyField(0.04, 3), q=1.5, p=12.0,
                                 weight=w, r=0.0,
                                 T_values=(0.05, 0.1, 0.2, 0.4))
    target = hardy["target_pth_power_reading"]  # 1/q'
    hardy_ok = bool(abs(hardy["p_slope"] - target) <= 0.1 * target)
    majorant_ok = bool(abs(hardy["majorant_p_slope"] - target) <= 0.1 * target)
    return {"criterion": 8, "name": "rho_fin_exponent",
            "const_p_slope": const["p_slope"], "const_pass": const_ok,
            "hardy_p_slope": hardy["p_slope"],
            "hardy_target": target, "hardy_pass_as_stated": hardy_ok,
            "majorant_p_slope": hardy["majorant_p_slope"],
            "majorant_matches_chained_exponent": majorant_ok,
            "note": ("static fields grow exactly linearly in the window, so "
                     "the fitted per-norm exponent is 1; the chained majorant "
                     "carries the (T-r)^{1/q'} scaling instead"),
            "pass": bool(const_ok and hardy_ok)}


def criterion_09_sde_baseline() -> dict:
    cfg = sde.EulerConfig(x0=(0.0, 0.0, 0.0), t_max=1.0, dt=1e-3,
                          n_paths=100_000, seed=SEED, level=1.0)
    ens = sde.simulate(cfg, ZERO3, head=4)
    expect = 2.0 * 3 * cfg.t_max
    var_single = 8.0 * 3 * cfg.t_max**2
    stderr = float(np.sqrt(var_single / cfg.n_paths))
    msd_dev = abs(ens.mean_square_displacement - expect)
    msd_ok = bool(msd_dev <= 3 * stderr)

    lo, hi = np.full(3, -0.5), np.full(3, 0.5)

    def h(t, x):
        return np.all((x >= lo) & (x <= hi), axis=-1).astype(float)

    occ, occ_err = sde.occupation_estimate(ens, h, (0.0, 1.0))
    # oracle: exact mean of the same left-endpoint Riemann estimator
    from scipy.special import erf

    t_k = np.arange(cfg.n_steps) * cfg.dt
    mass = np.ones_like(t_k)
    for tk_i, tk in enumerate(t_k):
        if tk == 0:
            continue
        sd = np.sqrt(2 * tk)
        m = 0.5 * (erf((0.5) / (sd * np.sqrt(2))) - erf((-0.5) / (sd * np.sqrt(2))))
        mass[tk_i] = m**3
    oracle = float(mass.sum() * cfg.dt)
    occ_ok = bool(abs(occ - oracle) <= 3 * occ_err)
    return {"criterion": 9, "name": "sde_baseline",
            "mean_square_displacement": ens.mean_square_displacement,
            "msd_target": expect, "msd_stderr": stderr, "msd_pass": msd_ok,
            "occupation": occ, "occupation_oracle": oracle,
            "occupation_stderr": occ_err, "occupation_pass": occ_ok,
            "flagged_paths": ens.flagged_paths,
            "pass": bool(msd_ok and occ_ok and ens.flagged_paths == 0)}


_shared_ensemble_cache: dict = {}


def _shared_hardy_ensemble() -> sde.PathEnsemble:
    key = "hardy_ens"
    if key not in _shared_ensemble_cache:
        cfg = sde.EulerConfig(x0=(0.2, 0.0, 0.0), t_max=1.0, dt=1e-4,
                              n_paths=15_000, seed=SEED + 1, level=10.0)
        _shared_ensemble_cache[key] = sde.simulate(cfg, fields.HardyField(0.04, 3),
                                                   head=2)
    return _shared_ensemble_cache[key]


def criterion_10_krylov_fit() -> dict:
    ens = _shared_hardy_ensemble()
    fit = sde.krylov_fit(fields.HardyField(0.04, 3), ens.config,
                         windows=(0.025, 0.05, 0.1, 0.2), ens=ens)
    ok = bool(fit.gamma > 0 and fit.r_squared >= 0.9 and fit.gamma_ci[0] > 0
              and not fit.flagged)
    doc = fit.to_json()
    doc.update({"criterion": 10, "name": "krylov_fit", "pass": ok})
    return doc


def criterion_11_martingale_residuals() -> dict:
    ens = _shared_hardy_ensemble()
    tests = [
        SpatialBump((0.0, 0.0, 0.0), (1.5, 1.5, 1.5)),
        SpatialBump((0.3, 0.0, 0.0), (1.2, 1.4, 1.3)),
        SpatialBump((0.0, -0.2, 0.1), (1.0, 1.0, 1.6)),
    ]
    rows = []
    outs = sde.martingale_residuals(ens, tests, checkpoints=(0.25, 0.5, 1.0))
    for i, out in enumerate(outs):
        for row in out["checkpoints"]:
            rows.append({"test_function": i, **row,
                         "pass": bool(abs(row["mean"]) <= 3 * row["stderr"])})
    return {"criterion": 11, "name": "martingale_residuals", "rows": rows,
            "pass": bool(all(r["pass"] for r in rows))}


def criterion_12_law_vs_propagator() -> dict:
    lam, p = 2.0, 6.0
    bump = SpatialBump((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    checkpoints = (0.25, 0.5)

    # Brownian part on the desk grid
    grid = DESK_GRID
    g = bump.value(grid.space_points())
    prop = solver.cauchy_propagate(ZERO3, g, r=0.0, p=p, lam=lam, grid=grid,
                                   seed=SEED)
    cfg = sde.EulerConfig(x0=(0.0, 0.0, 0.0), t_max=0.5, dt=2e-3,
                          n_paths=40_000, seed=SEED + 2, level=1.0)
    ens = sde.PathEnsemble(cfg, ZERO3)
    out0 = sde.law_vs_propagator(ens, bump, prop, checkpoints, lam)
    from scipy.integrate import quad

    brownian_rows = []
    for row in out0["rows"]:
        t = row["checkpoint"]
        sd = np.sqrt(2 * t)
        one_d = quad(lambda y: psi(y) * np.exp(-(y**2) / (2 * sd**2))
                     / (sd * np.sqrt(2 * np.pi)), -1.0, 1.0)[0]
        exact = one_d**3
        lattice_tol = abs(row["propagator"] - exact)
        ok = bool(row["gap"] <= 3 * row["mc_stderr"] + lattice_tol + 1e-3)
        brownian_rows.append({**row, "exact_gaussian": exact,
                              "lattice_tol": lattice_tol, "pass": ok})

    # Hardy part: joint (dt, dx) refinement shrinks the gap
    b = fields.HardyField(0.04, 3)
    x0 = (0.2, 0.0, 0.0)
    gaps = []
    for (dx, dt_pde, dt_sde) in ((0.5, 0.02, 2e-3), (0.25, 0.01, 1e-3)):
        grid_h = LatticeGrid(3, 2.0, dx, 0.0, 0.64, dt_pde)
        g_h = bump.value(grid_h.space_points())
        prop_h = solver.cauchy_propagate(fields.regularize(b, 10.0), g_h,
                                         r=0.0, p=p, lam=lam, grid=grid_h,
                                         seed=SEED, probes=16)
        cfg_h = sde.EulerConfig(x0=x0, t_max=0.5, dt=dt_sde, n_paths=40_000,
                                seed=SEED + 3, level=10.0)
        ens_h = sde.PathEnsemble(cfg_h, b)
        out_h = sde.law_vs_propagator(ens_h, bump, prop_h, checkpoints, lam)
        gaps.append(out_h["max_gap"])
    refinement = gaps[0] / gaps[1]
    ok = bool(all(r["pass"] for r in brownian_rows) and refinement >= 1.5)
    return {"criterion": 12, "name": "law_vs_propagator",
            "brownian_rows": brownian_rows, "hardy_gaps": gaps,
            "hardy_refinement_factor": refinement, "pass": ok}


def criterion_13_approximation_convergence() -> dict:
    grid = DESK_GRID
    f = _time_interior_bump(grid, xw=1.0)
    out = solver.approximation_convergence(fields.HardyField(0.04, 3), 2.0,
                                           64.0, [2.0, 5.0, 10.0, 20.0], grid,
                                           forcing=f, seed=SEED, probes=16)
    gaps = out["gaps_p_norm"]
    ok = bool(gaps[0] > gaps[1] > gaps[2] > 0)
    out.update({"criterion": 13, "name": "approximation_convergence",
                "strictly_decreasing": ok, "pass": ok})
    return out


CRITERIA = {
    1: criterion_01_kernel_normalization,
    2: criterion_02_semigroup_composition,
    3: criterion_03_zero_drift_degeneration,
    4: criterion_04_contraction_gate,
    5: criterion_05_oracle_equivalence,
    6: criterion_06_morrey_properties,
    7: criterion_07_weight_inequalities,
    8: criterion_08_rho_fin_exponent,
    9: criterion_09_sde_baseline,
    10: criterion_10_krylov_fit,
    11: criterion_11_martingale_residuals,
    12: criterion_12_law_vs_propagator,
    13: criterion_13_approximation_convergence,
}


def clear_all_caches():
    potentials.clear_caches()
    solver._weight_calibration.clear()
    _shared_ensemble_cache.clear()


def criterion_14_reproducibility(first_runs: dict[int, dict] | None = None,
                                 subset=None) -> dict:
    """Rerun criteria with cleared caches; byte-identical reports required."""
    subset = list(subset) if subset is not None else sorted(CRITERIA)
    if first_runs is None:
        first_runs = {k: CRITERIA[k]() for k in subset}
    rows = []
    clear_all_caches()
    for k in subset:
        again = CRITERIA[k]()
        same = canonical_json(first_runs[k]) == canonical_json(again)
        rows.append({"criterion": k, "byte_identical": bool(same)})
    return {"criterion": 14, "name": "reproducibility", "rows": rows,
            "pass": bool(all(r["byte_identical"] for r in rows))}


def run_all(printer=print) -> dict[int, dict]:
    """Run criteria 1-14 printing one pass/fail line each."""
    results: dict[int, dict] = {}
    for k in sorted(CRITERIA):
        results[k] = CRITERIA[k]()
        flag = "PASS" if results[k]["pass"] else "FAIL"
        extra = ""
        if k == 8 and not results[k]["pass"]:
            extra = "  (known-red clause: static fields grow linearly; see note)"
        printer(f"criterion {k:2d} [{results[k]['name']}]: {flag}{extra}")
    rep = criterion_14_reproducibility(results)
    results[14] = rep
    printer(f"criterion 14 [reproducibility]: {'PASS' if rep['pass'] else 'FAIL'}")
    return results
