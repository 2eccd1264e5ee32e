"""Sampling of drift fields onto lattices.

Lattice coefficients are per-cell averages (tensor Gauss-Legendre inside each
spatial cell, evaluated at the time node).  Cells that contain a Hardy-type
singular point are integrated with an octree refinement toward the singular
point: |b|^s with s <= 1 is integrable there, but a fixed-order rule is not
graded enough to resolve the regularization shells |b| ~ n.
"""

from __future__ import annotations

import numpy as np

from . import fields
from .grids import LatticeGrid, ScalarLattice, VectorLattice

_GL3_NODES = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GL3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0  # normalized to sum 1 on [-1/2, 1/2]


def _hardy_centers(spec: fields.FieldSpec) -> list[np.ndarray]:
    """Singular points of any Hardy leaves (all at the origin by construction)."""
    if isinstance(spec, fields.HardyField):
        return [np.zeros(spec.dimension)]
    if isinstance(spec, (fields.ScaledField, fields.RegularizedField, fields.SplitPartField)):
        return _hardy_centers(spec.inner)
    if isinstance(spec, fields.SumField):
        out = []
        for p in spec.parts:
            out.extend(_hardy_centers(p))
        return out
    return []


def _cell_quad_points(grid: LatticeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Tensor GL3 offsets (m, d) and weights (m,) for one cell of size dx^d."""
    d = grid.dimension
    offs = np.meshgrid(*([_GL3_NODES * grid.dx / 2] * d), indexing="ij")
    pts = np.stack([o.ravel() for o in offs], axis=-1)
    w = np.meshgrid(*([_GL3_WEIGHTS] * d), indexing="ij")
    weights = np.prod(np.stack([arr.ravel() for arr in w]), axis=0)
    return pts, weights


def _contains_grid_sampled(spec: fields.FieldSpec) -> bool:
    if isinstance(spec, fields.GridSampledField):
        return True
    if isinstance(spec, (fields.ScaledField, fields.RegularizedField, fields.SplitPartField)):
        return _contains_grid_sampled(spec.inner)
    if isinstance(spec, fields.SumField):
        return any(_contains_grid_sampled(p) for p in spec.parts)
    return False


_GL2_NODES = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GL2_WEIGHTS = np.array([0.5, 0.5])


def _graded_axis(lo: float, hi: float, point: float, depth: int) -> np.ndarray:
    """Breakpoints of [lo, hi] dyadically graded toward `point`."""
    half = (hi - lo) / 2
    marks = {lo, hi}
    for j in range(depth + 1):
        step = half * 2.0 ** (-j)
        for m in (point - step, point + step):
            if lo < m < hi:
                marks.add(m)
    if lo < point < hi:
        marks.add(point)
    return np.array(sorted(marks))


def _graded_cell_average(func, center: np.ndarray, half: float,
                         singular: np.ndarray, t: float, depth: int) -> np.ndarray:
    """Average of func over cube(center, half) on a tensor rule graded toward
    the singular point (assumed integrable there)."""
    d = center.size
    axes_nodes, axes_weights = [], []
    for i in range(d):
        edges = _graded_axis(center[i] - half, center[i] + half, singular[i], depth)
        mids = 0.5 * (edges[:-1] + edges[1:])
        hw = 0.5 * (edges[1:] - edges[:-1])
        nodes = (mids[:, None] + hw[:, None] * _GL2_NODES[None, :]).ravel()
        weights = (hw[:, None] * 2 * _GL2_WEIGHTS[None, :]).ravel()
        axes_nodes.append(nodes)
        axes_weights.append(weights)
    mesh = np.meshgrid(*axes_nodes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*axes_weights, indexing="ij")
    wts = np.prod(np.stack([w.ravel() for w in wmesh]), axis=0)
    vals = func(t, pts)
    total = np.tensordot(wts, vals, axes=(0, 0))
    return total / (2 * half) ** d


def _sample_transformed(spec: fields.FieldSpec, grid: LatticeGrid, transform,
                        out_dim: int, cell_average: bool, octree_depth: int) -> np.ndarray:
    """Common driver: transform maps field values (m, d) -> (m,) or (m, d)."""
    d = grid.dimension
    pts = grid.space_points().reshape(-1, d)
    n_cells = pts.shape[0]
    extra = (out_dim,) if out_dim else ()

    def func(t, points):
        vals = fields.eval_field(spec, t, points)
        return transform(vals)

    if _contains_grid_sampled(spec):
        cell_average = False  # lattice data is pointwise by construction
    if cell_average:
        offs, wts = _cell_quad_points(grid)
        quad_pts = (pts[:, None, :] + offs[None, :, :]).reshape(-1, d)
    singular_cells: dict[int, np.ndarray] = {}
    if cell_average:
        for s in _hardy_centers(spec):
            dist = np.abs(pts - s).max(axis=1)
            for idx in np.nonzero(dist <= grid.dx / 2 + 1e-12)[0]:
                singular_cells[int(idx)] = s

    static = fields.is_static(spec)
    times = grid.t_axis()
    slices = []
    for t in times:
        if static and slices:
            slices.append(slices[0])
            continue
        if cell_average:
            v = func(float(t), quad_pts).reshape((n_cells, len(wts)) + extra)
            slice_vals = np.tensordot(v, wts, axes=(1, 0))
            for idx, s in singular_cells.items():
                slice_vals[idx] = _graded_cell_average(
                    func, pts[idx], grid.dx / 2, s, float(t), octree_depth)
        else:
            slice_vals = func(float(t), pts)
        slices.append(slice_vals.reshape(grid.shape[1:] + extra))
    return np.stack(slices)


def sample_vector(spec: fields.FieldSpec, grid: LatticeGrid, power: float | None = None,
                  cell_average: bool = True, octree_depth: int = 9) -> VectorLattice:
    """Cell-averaged lattice of b (or b^{1/power} when power is given)."""
    if power is None:
        transform = lambda v: v
    else:
        transform = lambda v: fields.fractional_power_vector(v, power)
    vals = _sample_transformed(spec, grid, transform, grid.dimension,
                               cell_average, octree_depth)
    return VectorLattice(grid, vals)


def sample_magnitude(spec: fields.FieldSpec, grid: LatticeGrid, exponent: float = 1.0,
                     cell_average: bool = True, octree_depth: int = 9) -> ScalarLattice:
    """Cell-averaged lattice of |b|^exponent."""
    transform = lambda v: fields.magnitude_power(v, exponent)
    vals = _sample_transformed(spec, grid, transform, 0, cell_average, octree_depth)
    return ScalarLattice(grid, vals)


def singular_cell_moments(spec: fields.FieldSpec, grid: LatticeGrid, p: float,
                          depth: int = 9) -> list:
    """Sub-cell moments of the drift at cells holding a Hardy singularity.

    Plain cell averages lose all regularization-level structure once the
    cutoff shells fall inside one cell: the vector average vanishes by
    symmetry and the scalar average multiplies fields that vanish there.
    The first moment of b^{1/p} and second moment of |b|^{1/p'} recover that
    structure at the multiplication level.

    Returns [(cell_index, M1, M2)] with M1[j, m] = avg(b^{1/p}_j (x - c)_m)
    and M2[j, m] = avg(|b|^{1/p'} (x - c)_j (x - c)_m).  Static specs only.
    """
    d = grid.dimension
    p_conj = p / (p - 1.0)
    out = []
    pts = grid.space_points().reshape(-1, d)
    for s in _hardy_centers(spec):
        dist = np.abs(pts - s).max(axis=1)
        for flat in np.nonzero(dist <= grid.dx / 2 + 1e-12)[0]:
            idx = np.unravel_index(int(flat), grid.shape[1:])
            center = pts[flat]

            def m1_func(t, x):
                v = fields.fractional_power_vector(fields.eval_field(spec, t, x), p)
                return v[..., :, None] * (x - center)[..., None, :]

            def m2_func(t, x):
                mag = fields.magnitude_power(fields.eval_field(spec, t, x),
                                             1.0 / p_conj)
                delta = x - center
                return mag[..., None, None] * delta[..., :, None] * delta[..., None, :]

            m1 = _graded_cell_average(m1_func, center, grid.dx / 2, s, 0.0, depth)
            m2 = _graded_cell_average(m2_func, center, grid.dx / 2, s, 0.0, depth)
            out.append((idx, np.asarray(m1), np.asarray(m2)))
    return out
