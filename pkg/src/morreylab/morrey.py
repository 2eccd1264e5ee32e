"""Parabolic and elliptic Morrey norms, maximal functions, and the
Hedberg-type pointwise bound.

The norm of a drift b is sup over parabolic cylinders C_r(t,x) =
[t, t+r^2] x B_r(x) of r (avg_{C_r} |b|^q)^{1/q}.  The sup over all radii
and anchors is truncated to a finite dyadic sampling, so every estimate is
a certified lower bound of the true norm.  Cylinder averages use normalized
positive quadrature weights, which makes homogeneity in b exact and the
monotonicity in q an exact power-mean inequality, not a numerical accident.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.signal import fftconvolve

from . import fields
from .grids import ScalarLattice

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


class NumericalError(ArithmeticError):
    """Non-integrable sample (NaN/inf survived singularity handling)."""


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


# ---------------------------------------------------------------------------
# sampling geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParabolicCylinder:
    """C_r(t, x) = {(s, y): t <= s <= t + r^2, |x - y| <= r}."""

    t: float
    x: tuple[float, ...]
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("cylinder radius must be positive")

    @property
    def dimension(self) -> int:
        return len(self.x)

    def ball_volume(self) -> float:
        d = self.dimension
        from math import gamma as _gamma, pi
        return pi ** (d / 2) * self.r**d / _gamma(d / 2 + 1)

    def volume(self) -> float:
        return self.r**2 * self.ball_volume()

    def contains(self, s: float, y) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(self.t <= s <= self.t + self.r**2
                    and np.linalg.norm(y - np.asarray(self.x)) <= self.r)


@dataclass(frozen=True)
class CylinderSampling:
    """Dyadic radii r_min 2^k and a finite anchor set; a truncation of the
    sup over all radii and anchors."""

    radii: tuple[float, ...]
    centers: tuple[tuple[float, tuple[float, ...]], ...]
    nodes: int = 1728

    def __post_init__(self):
        if min(self.radii) <= 0:
            raise ValueError("radii must be positive")
        if not self.centers:
            raise ValueError("need at least one anchor")
        if self.nodes < 8:
            raise ValueError("need at least 8 quadrature nodes per cylinder")

    def cylinders(self):
        for r in self.radii:
            for (t, x) in self.centers:
                yield ParabolicCylinder(t, tuple(x), r)

    def fingerprint(self) -> str:
        blob = json.dumps([list(self.radii), [[t, list(x)] for t, x in self.centers],
                           self.nodes]).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class BallSampling:
    """Radii and spatial anchors for the elliptic (time-independent) norm."""

    radii: tuple[float, ...]
    centers: tuple[tuple[float, ...], ...]
    nodes: int = 1728

    def fingerprint(self) -> str:
        blob = json.dumps([list(self.radii), [list(x) for x in self.centers],
                           self.nodes]).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def dyadic_radii(r_min: float, count: int) -> tuple[float, ...]:
    return tuple(r_min * 2.0**k for k in range(count))


def default_cylinder_sampling(dimension: int, r_min: float = 0.125, n_radii: int = 5,
                              times=(0.0,), center_range: float = 0.5,
                              centers_per_axis: int = 3, nodes: int = 1728) -> CylinderSampling:
    axis = np.linspace(-center_range, center_range, centers_per_axis)
    mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    centers = tuple((float(t), tuple(map(float, p))) for t in times for p in pts)
    return CylinderSampling(dyadic_radii(r_min, n_radii), centers, nodes)


@dataclass
class NormEstimate:
    """Certified lower bound of the Morrey norm over a finite sampling."""

    value: float
    q: float
    argmax_radius: float
    argmax_center: tuple
    stderr: float
    sampling_fingerprint: str
    kind: str = "lower_bound"

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "q": self.q,
            "argmax_radius": self.argmax_radius,
            "argmax_center": list(np.ravel(np.asarray(self.argmax_center, dtype=object)).tolist())
            if isinstance(self.argmax_center, tuple) else self.argmax_center,
            "stderr": self.stderr,
            "sampling_fingerprint": self.sampling_fingerprint,
            "kind": self.kind,
        }


# ---------------------------------------------------------------------------
# quadrature over balls / cylinders
# ---------------------------------------------------------------------------

def _radial_profile(spec: fields.FieldSpec):
    """|b|(rho) for magnitude-radial specs anchored at the origin, or None."""
    if isinstance(spec, fields.HardyField):
        coeff, cut = spec.coefficient, spec.cutoff_radius

        def prof(rho):
            rho = np.asarray(rho, dtype=float)
            out = np.zeros_like(rho)
            inside = (rho > 0) & (rho < cut)
            out[inside] = coeff / rho[inside]
            return out

        return prof
    if isinstance(spec, fields.ScaledField):
        inner = _radial_profile(spec.inner)
        if inner is None:
            return None
        return lambda rho: abs(spec.factor) * inner(rho)
    if isinstance(spec, fields.RegularizedField):
        inner = _radial_profile(spec.inner)
        if inner is None:
            return None
        return lambda rho: np.where(inner(rho) <= spec.level, inner(rho), 0.0)
    if isinstance(spec, fields.SplitPartField):
        inner = _radial_profile(spec.inner)
        if inner is None:
            return None
        if spec.role == "bounded":
            return lambda rho: np.where(inner(rho) <= spec.threshold, inner(rho), 0.0)
        return lambda rho: np.where(inner(rho) > spec.threshold, inner(rho), 0.0)
    return None


def _radial_panels(lo: float, hi: float, n_panels: int, grade_at_zero: bool):
    """Panel edges on [lo, hi], dyadically graded toward zero when needed."""
    if not grade_at_zero or lo > 0:
        return np.linspace(lo, hi, n_panels + 1)
    edges = [hi]
    for _ in range(n_panels):
        edges.append(edges[-1] / 2)
    edges.append(0.0)
    return np.array(sorted(edges))


def _panel_gl(edges: np.ndarray, n_gl: int):
    x, w = _gl(n_gl)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _cap_fraction(rho: np.ndarray, c: float, r: float) -> np.ndarray:
    """Fraction of the sphere of radius rho (centered origin) inside B_r(y),
    |y| = c, in dimension 3."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    if c < 1e-14:
        out[rho <= r] = 1.0
        return out
    full = rho <= r - c
    out[full] = 1.0
    band = (~full) & (rho > abs(c - r) - 1e-300) & (rho < c + r)
    rb = rho[band]
    cos_t = (c**2 + rb**2 - r**2) / (2 * c * rb)
    out[band] = np.clip((1.0 - cos_t) / 2.0, 0.0, 1.0)
    return out


def _ball_quadrature_radial(profile, q: float, center: np.ndarray, r: float,
                            n_panels: int, n_gl: int):
    """Weighted samples of |b|^q over B_r(center) for radial |b| (d = 3)."""
    c = float(np.linalg.norm(center))
    lo, hi = max(0.0, c - r), c + r
    edges = _radial_panels(lo, hi, n_panels, grade_at_zero=(c <= r))
    rho, w = _panel_gl(edges, n_gl)
    frac = _cap_fraction(rho, c, r)
    weights = 4.0 * np.pi * rho**2 * frac * w
    vals = profile(rho) ** q
    return vals, weights


def _sphere_rule(n_u: int, n_phi: int):
    u, wu = _gl(n_u)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    wphi = np.full(n_phi, 2 * np.pi / n_phi)
    su = np.sqrt(1 - u**2)
    dirs = np.stack([
        np.outer(su, np.cos(phi)).ravel(),
        np.outer(su, np.sin(phi)).ravel(),
        np.outer(u, np.ones(n_phi)).ravel(),
    ], axis=-1)
    w = np.outer(wu, wphi).ravel()
    return dirs, w


def _ball_points_general(dimension: int, center: np.ndarray, r: float,
                         n_r: int, n_ang: int, grade_at: float | None):
    """Quadrature points/weights over B_r(center), product rule in d <= 3."""
    edges = np.linspace(0.0, r, n_r + 1)
    if grade_at is not None:
        # refine radially around the shell that carries the singular point
        extra = [grade_at * f for f in (0.5, 0.75, 0.9, 1.1, 1.25, 1.5)]
        edges = np.unique(np.clip(np.concatenate([edges, [grade_at], extra]), 0.0, r))
    rho, wr = _panel_gl(edges, 4)
    if dimension == 1:
        pts = np.concatenate([center - rho, center + rho])[:, None]
        w = np.concatenate([wr, wr])
        return pts, w
    if dimension == 2:
        phi = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        wphi = np.full(n_ang, 2 * np.pi / n_ang)
        pts = center + rho[:, None, None] * dirs[None, :, :]
        w = (rho * wr)[:, None] * wphi[None, :]
        return pts.reshape(-1, 2), w.ravel()
    if dimension == 3:
        n_u = max(4, n_ang // 2)
        dirs, wang = _sphere_rule(n_u, n_ang)
        pts = center + rho[:, None, None] * dirs[None, :, :]
        w = (rho**2 * wr)[:, None] * wang[None, :]
        return pts.reshape(-1, 3), w.ravel()
    raise NotImplementedError("ball quadrature implemented for d <= 3")


def _time_nodes(spec, t0: float, span: float, n_t: int):
    """Nodes/weights averaging over [t0, t0 + span]; graded toward t = 0 for
    drifts with a 1/sqrt(t) singularity when the window straddles it."""
    if fields.is_static(spec):
        return np.array([t0]), np.array([1.0])
    graded = _contains_inv_sqrt(spec) and t0 < 1e-12 < t0 + span
    if graded:
        edges = t0 + span * np.concatenate([[0.0], 0.5 ** np.arange(n_t, -1, -1.0)])
    else:
        edges = np.linspace(t0, t0 + span, n_t + 1)
    nodes, w = _panel_gl(edges, 4)
    return nodes, w / span


def _contains_inv_sqrt(spec) -> bool:
    if isinstance(spec, fields.InvSqrtTimeField):
        return True
    if isinstance(spec, (fields.ScaledField, fields.RegularizedField, fields.SplitPartField)):
        return _contains_inv_sqrt(spec.inner)
    if isinstance(spec, fields.SumField):
        return any(_contains_inv_sqrt(p) for p in spec.parts)
    return False


def _hardy_shell_distance(spec, center: np.ndarray, r: float):
    """Radius of the shell carrying a Hardy singularity inside the ball, if
    any; used to grade the radial panels of the general quadrature."""
    from .sampling import _hardy_centers
    for s in _hardy_centers(spec):
        dist = float(np.linalg.norm(np.asarray(s) - center))
        if dist < r:
            return dist
    return None


def _cylinder_average(spec, cyl: ParabolicCylinder, q: float, n_r: int, n_gl: int,
                      n_ang: int, n_t: int) -> float:
    """Normalized-weight estimate of avg_{C_r} |b|^q."""
    center = np.asarray(cyl.x, dtype=float)
    profile = _radial_profile(spec)
    t_nodes, t_weights = _time_nodes(spec, cyl.t, cyl.r**2, n_t)
    if profile is not None and cyl.dimension == 3:
        vals, w = _ball_quadrature_radial(profile, q, center, cyl.r, n_r, n_gl)
        space_avg = float((vals * w).sum() / w.sum())
        return space_avg  # radial profiles are static by construction
    pts, w = _ball_points_general(cyl.dimension, center, cyl.r, n_r, n_ang,
                                  _hardy_shell_distance(spec, center, cyl.r))
    acc = 0.0
    for tn, tw in zip(t_nodes, t_weights):
        mag = fields.magnitude_power(fields.eval_field(spec, float(tn), pts), 1.0)
        acc += tw * float(((mag**q) * w).sum() / w.sum())
    total_tw = t_weights.sum()
    return acc / total_tw


def cylinder_functional(spec, cyl: ParabolicCylinder, q: float,
                        nodes: int = 1728) -> tuple[float, float]:
    """r (avg_{C_r(z)} |b|^q)^{1/q} with a refinement-based standard error.

    Returns (value, stderr); the value is the finer of two nested quadrature
    levels and stderr their difference.
    """
    if not (1.0 < q <= cyl.dimension + 2):
        raise ValueError("q must lie in (1, d+2]")
    base = max(6, round(nodes ** (1.0 / 3.0)))
    coarse = _cylinder_average(spec, cyl, q, n_r=base, n_gl=3, n_ang=2 * base, n_t=base)
    fine = _cylinder_average(spec, cyl, q, n_r=2 * base, n_gl=4, n_ang=3 * base,
                             n_t=2 * base)
    if not np.isfinite(fine) or not np.isfinite(coarse):
        raise NumericalError("cylinder average is not finite")
    value = cyl.r * fine ** (1.0 / q)
    stderr = abs(value - cyl.r * coarse ** (1.0 / q))
    return float(value), float(stderr)


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MORREYLAB_WORKERS", "1")))
    except ValueError:
        return 1


def morrey_norm(spec, q: float, sampling: CylinderSampling) -> NormEstimate:
    """Max of the cylinder functional over the sampling (a lower bound of the
    true sup).  Ties break to the smallest radius, then lexicographic anchor."""
    cylinders = sorted(sampling.cylinders(), key=lambda c: (c.r, c.t, c.x))
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda c: cylinder_functional(spec, c, q, sampling.nodes), cylinders))
    else:
        results = [cylinder_functional(spec, c, q, sampling.nodes) for c in cylinders]
    best_i = 0
    for i in range(1, len(results)):
        if results[i][0] > results[best_i][0]:
            best_i = i
    best = cylinders[best_i]
    return NormEstimate(value=results[best_i][0], q=q, argmax_radius=best.r,
                        argmax_center=(best.t, best.x), stderr=results[best_i][1],
                        sampling_fingerprint=sampling.fingerprint())


def elliptic_morrey_norm(spec, q: float, sampling: BallSampling) -> NormEstimate:
    """Elliptic variant: balls B_r(y) replace parabolic cylinders; the field
    is evaluated at t = 0 (intended for time-independent specs)."""
    items = sorted((r, tuple(c)) for r in sampling.radii for c in sampling.centers)
    best = None
    for r, c in items:
        cyl = ParabolicCylinder(0.0, c, r)
        avg_coarse = _cylinder_average(spec, cyl, q, n_r=10, n_gl=3, n_ang=12, n_t=1)
        avg_fine = _cylinder_average(spec, cyl, q, n_r=20, n_gl=4, n_ang=18, n_t=1)
        val = r * avg_fine ** (1.0 / q)
        err = abs(val - r * avg_coarse ** (1.0 / q))
        if best is None or val > best[0]:
            best = (val, err, r, c)
    return NormEstimate(value=float(best[0]), q=q, argmax_radius=best[2],
                        argmax_center=best[3], stderr=float(best[1]),
                        sampling_fingerprint=sampling.fingerprint())


# ---------------------------------------------------------------------------
# maximal functions
# ---------------------------------------------------------------------------

def _ball_mask(radius_nodes: float, d: int) -> np.ndarray:
    k = int(np.floor(radius_nodes))
    ax = np.arange(-k, k + 1)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    dist2 = sum(m**2 for m in mesh)
    return (dist2 <= radius_nodes**2 + 1e-12).astype(float)


def _forward_time_average(a: np.ndarray, m: int) -> np.ndarray:
    """Mean over time nodes [i, i + m - 1], zero extension past the window end
    (the sum clips at the boundary, the divisor stays the full count m)."""
    nt = a.shape[0]
    cs = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)], axis=0)
    hi = np.minimum(np.arange(nt) + m, nt)
    return (cs[hi] - cs[np.arange(nt)]) / m


def maximal_function(h: ScalarLattice, beta: float, mode: str = "anchored",
                     radii: tuple[float, ...] | None = None) -> ScalarLattice:
    """Parabolic maximal function sup_rho rho^beta (avg over C_rho) of h >= 0.

    mode="anchored" anchors cylinders at each node; mode="uncentered" also
    shifts anchors over the stencil of cylinders containing the node, so it
    dominates the anchored variant pointwise.  Averages treat h as zero
    outside the lattice while dividing by the full cylinder node count.
    """
    if np.any(h.values < 0):
        raise ValueError("maximal function expects h >= 0")
    grid = h.grid
    d = grid.dimension
    if not (0 <= beta <= d + 2):
        raise ValueError("beta must lie in [0, d+2]")
    if radii is None:
        # cover the whole lattice in both space (diameter) and time (window)
        reach = max(2 * grid.half_width * np.sqrt(d),
                    np.sqrt(grid.t1 - grid.t0))
        n = int(np.ceil(np.log2(reach / grid.dx))) + 1
        radii = tuple(grid.dx * 2.0**k for k in range(max(n, 1)))
    out = np.full(grid.shape, -np.inf)
    for rho in radii:
        mask = _ball_mask(rho / grid.dx, d)
        count = mask.sum()
        kernel = mask[None, ...]
        conv = fftconvolve(h.values, kernel, mode="same") / count
        m = int(np.floor(rho**2 / grid.dt)) + 1
        avg = _forward_time_average(conv, m)
        if mode == "uncentered":
            m = min(m, grid.n_time)
            # anchors (t', y) with t' in [t - rho^2, t], |y - x| <= rho
            foot = np.broadcast_to(mask.astype(bool), (1,) + mask.shape)
            avg = maximum_filter(avg, footprint=foot, mode="nearest")
            pad = np.concatenate([np.full((m - 1,) + avg.shape[1:], -np.inf), avg])
            stacked = np.stack([pad[m - 1 - s: pad.shape[0] - s] for s in range(m)])
            avg = stacked.max(axis=0)
        np.maximum(out, rho**beta * avg, out=out)
    return ScalarLattice(grid, np.maximum(out, 0.0))


def hedberg_ratio(h: ScalarLattice, alpha: float, beta: float,
                  radii: tuple[float, ...] | None = None) -> float:
    """sup over nodes of P_alpha h / [(M_beta h)^{alpha/beta} (M h)^{1-alpha/beta}],
    with 0/0 counted as 0.  P_alpha is the backward lambda = 0 potential."""
    if not (0 < alpha < beta <= h.grid.dimension + 2):
        raise ValueError("need 0 < alpha < beta <= d+2")
    from .potentials import build_kernel_plan, potential_apply

    plan = build_kernel_plan(h.grid, "backward", alpha, 0.0)
    p_alpha = potential_apply(plan, h).values
    m_beta = maximal_function(h, beta, "anchored", radii).values
    m_zero = maximal_function(h, 0.0, "anchored", radii).values
    denom = m_beta ** (alpha / beta) * m_zero ** (1 - alpha / beta)
    ratio = np.zeros_like(p_alpha)
    pos = denom > 0
    ratio[pos] = p_alpha[pos] / denom[pos]
    if np.any(~pos & (np.abs(p_alpha) > 1e-13 * max(1.0, np.abs(p_alpha).max()))):
        raise NumericalError("potential positive where maximal functions vanish")
    return float(ratio.max())


# ---------------------------------------------------------------------------
# LPS (mixed-integrability) classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LpsReport:
    p: float
    l: float
    dimension: int
    exponent: float
    classification: str
    membership_preconditions: bool


def lps_classify(p: float, l: float, dimension: int = 3,
                 spec=None) -> LpsReport:
    """Classify d/p + 2/l against 1 (sub/critical/supercritical scaling)."""
    if spec is not None:
        dimension = fields.field_dimension(spec)
    exponent = dimension / p + (0.0 if np.isinf(l) else 2.0 / l)
    if abs(exponent - 1.0) < 1e-12:
        cls = "critical"
    elif exponent < 1.0:
        cls = "subcritical"
    else:
        cls = "supercritical"
    return LpsReport(p=p, l=l, dimension=dimension, exponent=float(exponent),
                     classification=cls,
                     membership_preconditions=bool(p >= dimension and l >= 2))
