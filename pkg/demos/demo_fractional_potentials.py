#!/usr/bin/env python3
"""Fractional parabolic potentials on the lattice.

The family (lambda + d/dt - Laplace)^{-alpha/2} is discretized as a
one-sided time convolution of exact incomplete-gamma cell weights against
the reflecting-box heat semigroup.  Constants reproduce the operator norm
lambda^{-alpha/2} to near machine precision and the family composes.
"""
import numpy as np

from morreylab.bumps import SpatialBump, SpaceTimeBump
from morreylab.fields import HardyField
from morreylab.grids import LatticeGrid
from morreylab.potentials import (
    DriftOperators, build_kernel_plan, gradient_potential_apply,
    potential_apply, probe_operator_norm,
)

grid = LatticeGrid(3, 2.0, 0.25, 0.0, 0.64, 0.01)
print(f"grid: {grid.n_space}^3 x {grid.n_time} nodes, dx={grid.dx}, dt={grid.dt}")

ones = np.ones(grid.shape)
print("\nconstant input -> lambda^(-alpha/2):")
for alpha in (0.5, 1.0, 2.0):
    for lam in (1.0, 4.0):
        plan = build_kernel_plan(grid, "forward", alpha, lam)
        out = potential_apply(plan, ones)
        print(f"  alpha={alpha}, lambda={lam}: value {out[32, 8, 8, 8]:.8f} "
              f"vs {lam ** (-alpha / 2):.8f}")

bump = SpaceTimeBump(0.36, 0.30, SpatialBump((0, 0, 0), (1.2, 1.2, 1.2)))
h = bump.on_grid(grid)
pa = build_kernel_plan(grid, "forward", 0.5, 1.0)
pc = build_kernel_plan(grid, "forward", 1.0, 1.0)
lhs = potential_apply(pa, potential_apply(pa, h))
rhs = potential_apply(pc, h)
cut = grid.interior_slices(4, 2)
print(f"\nsemigroup composition (1/2 + 1/2 vs 1): interior relative deviation "
      f"{np.abs(lhs - rhs)[cut].max() / np.abs(rhs[cut]).max():.2e}")

grad = gradient_potential_apply(pc, h)
fd = np.gradient(potential_apply(pc, h), grid.dx, axis=1)
print(f"analytic gradient vs central differences (interior max dev): "
      f"{np.abs(grad[..., 0] - fd)[cut].max():.2e}")

print("\nrandomized operator-norm probe of T_p = R_p Q_p, Hardy delta=0.04, p=2:")
b = HardyField(0.04, 3)
for lam in (1.0, 16.0, 64.0):
    ops = DriftOperators(b, grid, 2.0, lam)
    rep = probe_operator_norm(lambda x: ops.T(x), 2.0, grid, probes=16,
                              seed=1, lam=lam)
    print(f"  lambda={lam:5.0f}: probed lower bound {rep.ratio:.4f} "
          f"(argmax source: {rep.argmax_source})")
print("  -> shrinks with lambda; the series gate opens well below 1")
