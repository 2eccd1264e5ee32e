"""Euler-Maruyama weak-solution ensembles and their diagnostics.

Simulation is X_{k+1} = X_k - b_n(t_k, X_k) dt + sqrt(2 dt) xi_k with the
regularized drift b_n (only bounded drifts are stepped; the singular limit
is studied as a sweep over n).  Every path owns a counter-keyed Philox
stream derived from (master seed, path index), so ensembles are bit-exact
reproducible and enlarging the path count never reshuffles existing paths.

Ensembles do not retain full trajectories (at acceptance scale that would
be gigabytes); instead they keep the configuration plus a small head sample
and replay deterministically, feeding per-step visitors that accumulate
path functionals (occupation integrals, martingale increments, running
maxima, checkpoint marginals).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as student_t

from . import fields
from .rng import generator

_PATH_STREAM = 0x5DE5
_BATCH = 4096
_SEGMENT = 1024


@dataclass(frozen=True)
class EulerConfig:
    x0: tuple[float, ...]
    t_max: float
    dt: float
    n_paths: int
    seed: int
    level: float  # drift regularization bound fed to regularize()

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("need positive dt and horizon")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if not np.isfinite(self.level) or self.level <= 0:
            raise ValueError("drift level must be finite and positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def dimension(self) -> int:
        return len(self.x0)

    def to_json(self) -> dict:
        return {"x0": list(self.x0), "t_max": self.t_max, "dt": self.dt,
                "n_paths": self.n_paths, "seed": self.seed, "level": self.level}


class PathVisitor:
    """Per-batch accumulator protocol for ensemble replays."""

    def start(self, n: int, x0: np.ndarray):
        pass

    def step(self, k: int, t: float, x: np.ndarray, drift: np.ndarray):
        """Called with pre-step positions and the regularized drift value
        already evaluated there, for k = 0 .. n_steps-1."""

    def finish(self, x: np.ndarray):
        pass

    def collect(self):
        """Return per-path results of the current batch."""
        raise NotImplementedError


@dataclass
class PathEnsemble:
    config: EulerConfig
    spec: fields.FieldSpec
    flagged_paths: int = 0
    head_paths: np.ndarray | None = field(default=None, repr=False)
    mean_square_displacement: float = 0.0

    def __post_init__(self):
        self.drift = fields.regularize(self.spec, self.config.level)

    # -- replay machinery ---------------------------------------------------

    def _batch_noise_streams(self, lo: int, hi: int):
        return [generator(self.config.seed, _PATH_STREAM, i) for i in range(lo, hi)]

    def replay(self, visitors: list[PathVisitor], head: int = 0):
        """Re-run the ensemble, feeding visitors; returns per-visitor lists of
        concatenated per-path results plus (flagged count, head trajectories)."""
        cfg = self.config
        d = cfg.dimension
        n_steps = cfg.n_steps
        results: list[list] = [[] for _ in visitors]
        flagged = 0
        head_store = None
        if head > 0:
            head_store = np.empty((min(head, cfg.n_paths), n_steps + 1, d))
        for lo in range(0, cfg.n_paths, _BATCH):
            hi = min(lo + _BATCH, cfg.n_paths)
            n = hi - lo
            streams = self._batch_noise_streams(lo, hi)
            x = np.tile(np.asarray(cfg.x0, dtype=float), (n, 1))
            alive = np.ones(n, dtype=bool)
            for v in visitors:
                v.start(n, x)
            if head_store is not None and lo < head_store.shape[0]:
                head_store[lo:min(hi, head_store.shape[0]), 0] = \
                    x[: max(0, min(hi, head_store.shape[0]) - lo)]
            for seg_lo in range(0, n_steps, _SEGMENT):
                seg_hi = min(seg_lo + _SEGMENT, n_steps)
                noise = np.stack([s.standard_normal((seg_hi - seg_lo, d))
                                  for s in streams])
                for k in range(seg_lo, seg_hi):
                    t_k = k * cfg.dt
                    drift = fields.eval_field(self.drift, t_k, x)
                    for v in visitors:
                        v.step(k, t_k, x, drift)
                    x = x - drift * cfg.dt \
                        + np.sqrt(2 * cfg.dt) * noise[:, k - seg_lo, :]
                    bad = ~np.isfinite(x).all(axis=1)
                    if bad.any():
                        x[bad] = np.nan
                        newly = bad & alive
                        flagged += int(newly.sum())
                        alive &= ~bad
                    if head_store is not None and lo < head_store.shape[0]:
                        m = min(hi, head_store.shape[0]) - lo
                        head_store[lo:lo + m, k + 1] = x[:m]
            for i, v in enumerate(visitors):
                v.finish(x)
                results[i].append(v.collect())
        merged = [np.concatenate(r, axis=0) if r else np.empty(0) for r in results]
        return merged, flagged, head_store

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "drift": fields.spec_to_dict(self.drift),
            "flagged_paths": self.flagged_paths,
            "mean_square_displacement": self.mean_square_displacement,
        }


class _FinalPosition(PathVisitor):
    def start(self, n, x0):
        self.x0 = x0.copy()

    def finish(self, x):
        self.final = x

    def collect(self):
        return self.final - self.x0


def simulate(config: EulerConfig, spec: fields.FieldSpec,
             head: int = 16) -> PathEnsemble:
    """Run the ensemble once: flags blown-up paths, retains a head sample of
    full trajectories, and records the mean square displacement."""
    ens = PathEnsemble(config, spec)
    vis = _FinalPosition()
    (disp,), flagged, head_traj = ens.replay([vis], head=head)
    ens.flagged_paths = flagged
    ens.head_paths = head_traj
    ok = np.isfinite(disp).all(axis=1)
    ens.mean_square_displacement = float((disp[ok] ** 2).sum(axis=1).mean())
    return ens


# ---------------------------------------------------------------------------
# occupation functionals
# ---------------------------------------------------------------------------

class _Occupation(PathVisitor):
    def __init__(self, h, window, dt):
        self.h, self.window, self.dt = h, window, dt

    def start(self, n, x0):
        self.acc = np.zeros(n)

    def step(self, k, t, x, drift):
        if self.window[0] - 1e-12 <= t < self.window[1] - 1e-12:
            vals = self.h(t, x)
            self.acc += np.where(np.isfinite(vals), vals, 0.0) * self.dt

    def collect(self):
        return self.acc


def _statistical_guard(n_paths: int):
    if n_paths < 1000:
        warnings.warn(f"statistical estimate over {n_paths} paths; "
                      "ensembles below 1e3 paths carry large standard errors",
                      stacklevel=3)


def occupation_estimate(ens: PathEnsemble, h, window) -> tuple[float, float]:
    """(1/N) sum_paths sum_k h(t_k, X_k) dt over the window, with the
    standard error of the per-path integrals."""
    _statistical_guard(ens.config.n_paths)
    vis = _Occupation(h, window, ens.config.dt)
    (per_path,), _, _ = ens.replay([vis])
    mean = float(per_path.mean())
    stderr = float(per_path.std(ddof=1) / np.sqrt(len(per_path)))
    return mean, stderr


class _WindowedOccupation(PathVisitor):
    """Cumulative |f| occupation snapshotted at several window ends."""

    def __init__(self, h, windows, dt):
        self.h, self.dt = h, dt
        self.windows = windows
        self.k_ends = [int(round(w / dt)) for w in windows]

    def start(self, n, x0):
        self.acc = np.zeros(n)
        self.snaps = np.zeros((n, len(self.windows)))

    def step(self, k, t, x, drift):
        self.n_seen = k + 1
        for j, ke in enumerate(self.k_ends):
            if k == ke:
                self.snaps[:, j] = self.acc
        vals = self.h(t, x) if self.h is not None else \
            np.sqrt((drift**2).sum(axis=-1))
        self.acc += np.where(np.isfinite(vals), vals, 0.0) * self.dt

    def finish(self, x):
        # windows ending at the horizon snapshot the fully accumulated sum
        for j, ke in enumerate(self.k_ends):
            if ke >= getattr(self, "n_seen", 0):
                self.snaps[:, j] = self.acc

    def collect(self):
        return self.snaps


@dataclass
class KrylovFit:
    windows: list[float]
    estimates: list[float]
    stderrs: list[float]
    C: float
    gamma: float
    r_squared: float
    gamma_ci: tuple[float, float]
    seed: int
    flagged: bool = False

    def to_json(self) -> dict:
        return {
            "windows": self.windows,
            "estimates": self.estimates,
            "stderrs": self.stderrs,
            "C": self.C,
            "gamma": self.gamma,
            "r_squared": self.r_squared,
            "gamma_ci": list(self.gamma_ci),
            "seed": self.seed,
            "flagged": self.flagged,
        }


def krylov_fit(spec: fields.FieldSpec, config: EulerConfig, windows,
               k_level: float | None = None,
               ens: PathEnsemble | None = None) -> KrylovFit:
    """Fit E int_0^h |b_k(t, X_t)| dt ~ C h^gamma over >= 4 window sizes.

    The integrand level k defaults to the simulation level n.  Estimates for
    all windows come from a single replay (nested windows share paths)."""
    windows = sorted(windows)
    if len(windows) < 4:
        raise ValueError("need at least 4 window sizes")
    _statistical_guard(config.n_paths)
    ens = ens or PathEnsemble(config, spec)
    if k_level is None or k_level == config.level:
        integrand = None  # magnitude of the stepping drift, reused per step
    else:
        b_k = fields.regularize(spec, k_level)

        def integrand(t, x):
            return fields.magnitude_power(fields.eval_field(b_k, t, x), 1.0)

    wvis = _WindowedOccupation(integrand, windows, config.dt)
    (snaps,), _, _ = ens.replay([wvis])
    # snapshot at k_end holds the integral over [0, window)
    estimates = snaps.mean(axis=0)
    stderrs = snaps.std(axis=0, ddof=1) / np.sqrt(snaps.shape[0])
    flagged = bool(np.any(estimates <= 0))
    if flagged:
        return KrylovFit(list(windows), estimates.tolist(), stderrs.tolist(),
                         np.nan, np.nan, np.nan, (np.nan, np.nan),
                         config.seed, flagged=True)
    logs_h = np.log(windows)
    logs_e = np.log(estimates)
    coeffs, residuals, *_ = np.polyfit(logs_h, logs_e, 1, full=True)
    gamma, logC = float(coeffs[0]), float(coeffs[1])
    fitted = np.polyval(coeffs, logs_h)
    ss_res = float(((logs_e - fitted) ** 2).sum())
    ss_tot = float(((logs_e - logs_e.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / max(ss_tot, 1e-300)
    n = len(windows)
    se = np.sqrt(ss_res / max(n - 2, 1)
                 / ((logs_h - logs_h.mean()) ** 2).sum())
    # statistical error of each point propagates into the slope as well
    se_stat = float(np.sqrt(((stderrs / estimates) ** 2).sum())
                    / np.sqrt(((logs_h - logs_h.mean()) ** 2).sum()))
    width = student_t.ppf(0.975, max(n - 2, 1)) * max(se, se_stat)
    return KrylovFit(list(windows), estimates.tolist(), stderrs.tolist(),
                     float(np.exp(logC)), gamma, float(r2),
                     (gamma - width, gamma + width), config.seed)


def krylov_nu_ratio(ens: PathEnsemble, dictionary, nu: float) -> dict:
    """sup over a test dictionary of E int |h| dt / ||1_{[0,T]} h||_nu.

    `dictionary` is a list of (name, callable h(t, x), nu_norm) with the
    space-time L^nu norm supplied analytically or by quadrature."""
    if nu <= (ens.config.dimension + 2) / 2:
        raise ValueError("nu must exceed (d + 2) / 2")
    rows = []
    visitors = [_Occupation(h, (0.0, ens.config.t_max), ens.config.dt)
                for (_, h, _) in dictionary]
    results, _, _ = ens.replay(visitors)
    for (name, _h, norm), per_path in zip(dictionary, results):
        mean = float(per_path.mean())
        stderr = float(per_path.std(ddof=1) / np.sqrt(len(per_path)))
        rows.append({"name": name, "occupation": mean, "stderr": stderr,
                     "nu_norm": norm, "ratio": mean / norm})
    return {"nu": nu, "rows": rows,
            "sup_ratio": max(r["ratio"] for r in rows)}


# ---------------------------------------------------------------------------
# martingale diagnostics
# ---------------------------------------------------------------------------

class _Martingale(PathVisitor):
    """Per-path M_r = f(X_r) - f(x0) + int_0^r (-Lap f + b . grad f) dt at
    checkpoint times, plus bounded functionals of the checkpoint marginals."""

    def __init__(self, f, checkpoints, dt):
        self.f, self.dt = f, dt
        self.k_checks = [int(round(c / dt)) for c in checkpoints]
        self.n_checks = len(checkpoints)

    def start(self, n, x0):
        self.integral = np.zeros(n)
        self.f0 = self.f.value(x0)
        self.m = np.zeros((n, self.n_checks))
        self.marginals = np.zeros((n, self.n_checks, x0.shape[1]))

    def step(self, k, t, x, drift):
        self.n_seen = k + 1
        for j, kc in enumerate(self.k_checks):
            if k == kc:
                self.m[:, j] = self.f.value(x) - self.f0 + self.integral
                self.marginals[:, j] = x
        term = -self.f.laplacian(x) + np.einsum("...c,...c->...",
                                                drift, self.f.gradient(x))
        self.integral += np.where(np.isfinite(term), term, 0.0) * self.dt

    def finish(self, x):
        for j, kc in enumerate(self.k_checks):
            if kc >= getattr(self, "n_seen", 0):
                self.m[:, j] = self.f.value(x) - self.f0 + self.integral
                self.marginals[:, j] = x

    def collect(self):
        return np.concatenate([self.m, self.marginals.reshape(self.m.shape[0], -1)],
                              axis=1)


def martingale_residual(ens: PathEnsemble, test_function, checkpoints,
                        conditioning=None) -> dict:
    """Checkpoint table of E[M_r^f] with standard errors, plus conditional
    increment correlations E[(M_r - M_s) phi(X_s)] for bounded functionals
    phi of the earlier marginal."""
    return martingale_residuals(ens, [test_function], checkpoints,
                                conditioning)[0]


def martingale_residuals(ens: PathEnsemble, test_functions, checkpoints,
                         conditioning=None) -> list[dict]:
    """martingale_residual for several test functions in a single replay."""
    cfg = ens.config
    checks = sorted(checkpoints)
    if any(c > cfg.t_max + 1e-12 for c in checks):
        raise ValueError("checkpoint beyond the horizon")
    _statistical_guard(cfg.n_paths)
    visitors = [_Martingale(f, checks, cfg.dt) for f in test_functions]
    tables, _, _ = ens.replay(visitors)
    return [_martingale_table(table, checks, cfg, conditioning)
            for table in tables]


def _martingale_table(table, checks, cfg, conditioning):
    n_c = len(checks)
    m = table[:, :n_c]
    marg = table[:, n_c:].reshape(table.shape[0], n_c, cfg.dimension)
    rows = []
    for j, c in enumerate(checks):
        mean = float(m[:, j].mean())
        stderr = float(m[:, j].std(ddof=1) / np.sqrt(m.shape[0]))
        rows.append({"checkpoint": c, "mean": mean, "stderr": stderr,
                     "z": mean / max(stderr, 1e-300)})
    conditioning = conditioning or [
        ("one", lambda x: np.ones(x.shape[0])),
        ("tanh_x1", lambda x: np.tanh(x[..., 0])),
        ("inside_unit_ball", lambda x: ((x**2).sum(axis=-1) < 1.0).astype(float)),
    ]
    cond_rows = []
    for j in range(1, n_c):
        inc = m[:, j] - m[:, j - 1]
        for name, phi in conditioning:
            w = phi(marg[:, j - 1])
            prod = inc * w
            mean = float(prod.mean())
            stderr = float(prod.std(ddof=1) / np.sqrt(len(prod)))
            cond_rows.append({
                "from": checks[j - 1], "to": checks[j], "phi": name,
                "mean": mean, "stderr": stderr,
                "z": mean / max(stderr, 1e-300),
            })
    return {"checkpoints": rows, "conditional": cond_rows,
            "n_paths": int(m.shape[0])}


# ---------------------------------------------------------------------------
# law vs propagator and tail mass
# ---------------------------------------------------------------------------

class _CheckpointMeans(PathVisitor):
    def __init__(self, g, checkpoints, dt):
        self.g = g
        self.k_checks = [int(round(c / dt)) for c in checkpoints]

    def start(self, n, x0):
        self.vals = np.zeros((n, len(self.k_checks)))

    def step(self, k, t, x, drift):
        self.n_seen = k + 1
        for j, kc in enumerate(self.k_checks):
            if k == kc:
                self.vals[:, j] = self.g(x)

    def finish(self, x):
        for j, kc in enumerate(self.k_checks):
            if kc >= getattr(self, "n_seen", 0):
                self.vals[:, j] = self.g(x)

    def collect(self):
        return self.vals


def _interp_spatial(values: np.ndarray, grid, point) -> float:
    """Multilinear interpolation of one spatial slice at a point."""
    d = grid.dimension
    coords = [(point[i] + grid.half_width) / grid.dx for i in range(d)]
    lo = [int(np.clip(np.floor(c), 0, grid.n_space - 2)) for c in coords]
    fr = [c - l for c, l in zip(coords, lo)]
    out = 0.0
    for corner in range(2**d):
        w = 1.0
        idx = []
        for axis in range(d):
            bit = (corner >> axis) & 1
            idx.append(lo[axis] + bit)
            w *= fr[axis] if bit else (1 - fr[axis])
        out += w * values[tuple(idx)]
    return float(out)


def law_vs_propagator(ens: PathEnsemble, g, propagation, checkpoints,
                      lam: float) -> dict:
    """|E g(X_t) - e^{lam (t - r)} v(t, x0)| per checkpoint, where v comes
    from a Cauchy propagation computed with the same (regularized) drift.

    Static drifts only: the backward/forward reversal is the identity for
    them; time-dependent drifts would need an explicitly reversed spec and
    are flagged as unsupported here.
    """
    if not fields.is_static(ens.drift):
        raise ValueError("time orientation: only static drifts are supported")
    cfg = ens.config
    checks = sorted(checkpoints)

    def g_vec(x):
        return g.value(x) if hasattr(g, "value") else g(x)

    vis = _CheckpointMeans(lambda x: g_vec(x), checks, cfg.dt)
    (vals,), _, _ = ens.replay([vis])
    grid = propagation.v.grid
    rows = []
    for j, c in enumerate(checks):
        mc = float(vals[:, j].mean())
        se = float(vals[:, j].std(ddof=1) / np.sqrt(vals.shape[0]))
        slice_v = propagation.slice_at(propagation.r + c)
        pde = np.exp(lam * c) * _interp_spatial(slice_v, grid, cfg.x0)
        rows.append({"checkpoint": c, "monte_carlo": mc, "mc_stderr": se,
                     "propagator": pde, "gap": abs(mc - pde)})
    return {"rows": rows, "max_gap": max(r["gap"] for r in rows)}


class _RunningMax(PathVisitor):
    def start(self, n, x0):
        self.best = np.sqrt((x0**2).sum(axis=1))

    def step(self, k, t, x, drift):
        r = np.sqrt((x**2).sum(axis=1))
        np.maximum(self.best, np.where(np.isfinite(r), r, np.inf), out=self.best)

    def finish(self, x):
        r = np.sqrt((x**2).sum(axis=1))
        np.maximum(self.best, np.where(np.isfinite(r), r, np.inf), out=self.best)

    def collect(self):
        return self.best


def tail_mass(ens: PathEnsemble, radii) -> dict:
    """Fraction of paths with sup_t |X_t| >= R for each R (nonincreasing)."""
    vis = _RunningMax()
    (sup_r,), _, _ = ens.replay([vis])
    rows = [{"R": float(R), "fraction": float((sup_r >= R).mean())}
            for R in sorted(np.atleast_1d(radii))]
    return {"rows": rows, "n_paths": len(sup_r)}


# ---------------------------------------------------------------------------
# closed-form Brownian oracles (b = 0 cross-checks)
# ---------------------------------------------------------------------------

def gaussian_box_occupation(x0, lo, hi, window, n_quad: int = 400) -> float:
    """E int_{s}^{r} 1_box(X_t) dt for X_t = x0 + sqrt(2) B_t, by 1-D
    quadrature of the product of Gaussian interval masses."""
    from scipy.special import erf

    s, r = window
    ts = np.linspace(s, r, n_quad + 1)
    ts = 0.5 * (ts[:-1] + ts[1:])
    w = (r - s) / n_quad
    total = 0.0
    x0 = np.asarray(x0, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    for t in ts:
        if t <= 0:
            inside = float(np.all((x0 >= lo) & (x0 <= hi)))
            total += inside * w
            continue
        sd = np.sqrt(2 * t)
        mass = 0.5 * (erf((hi - x0) / (sd * np.sqrt(2)))
                      - erf((lo - x0) / (sd * np.sqrt(2))))
        total += float(np.prod(mass)) * w
    return total
