#!/usr/bin/env python3
"""Morrey-norm laboratory.

Estimates the parabolic norm sup_r,z r (avg_{C_r(z)} |b|^q)^{1/q} over a
finite dyadic sampling (a certified lower bound), demonstrates the exact
structural properties, and classifies mixed-integrability exponents.
"""
import numpy as np

from morreylab.fields import ConstantField, HardyField, InvSqrtTimeField, ScaledField
from morreylab.morrey import (
    BallSampling, CylinderSampling, default_cylinder_sampling, dyadic_radii,
    elliptic_morrey_norm, lps_classify, morrey_norm,
)

b = HardyField(delta=0.09, dimension=3)
sampling = default_cylinder_sampling(3, nodes=800)

print("Parabolic Morrey norm estimates (lower bounds over the sampling):")
for q in (1.2, 1.5, 2.0):
    est = morrey_norm(b, q, sampling)
    print(f"  q = {q}: {est.value:.4f} +- {est.stderr:.1e} "
          f"(argmax radius {est.argmax_radius})")
print("  -> nondecreasing in q (exact power-mean inequality on shared nodes)")

double = morrey_norm(ScaledField(2.0, b), 1.5, sampling)
single = morrey_norm(b, 1.5, sampling)
print(f"\nHomogeneity: ||2 b|| / ||b|| = {double.value / single.value:.12f}")

# the empirical constant in ||hardy||_{E_q} = c sqrt(delta)
c_emp = single.value / np.sqrt(0.09)
print(f"Empirical c with ||b||_Eq = c sqrt(delta): c = {c_emp:.4f} at q = 1.5")

elliptic = elliptic_morrey_norm(HardyField(1.0, 3), 1.5,
                                BallSampling(dyadic_radii(0.1, 4),
                                             ((0.0, 0.0, 0.0),)))
print(f"\nElliptic norm of the unit-delta Hardy field: {elliptic.value:.4f} "
      f"(radius-independent at the singularity)")

const = ConstantField((1.0, 0.0, 0.0))
for r_max, n in ((4.0, 6), (8.0, 7)):
    s = CylinderSampling(dyadic_radii(r_max / 2 ** (n - 1), n),
                         ((0.0, (0.0, 0.0, 0.0)),), nodes=600)
    print(f"Constant field, radii up to {r_max}: estimate "
          f"{morrey_norm(const, 1.5, s).value:.3f}  (grows like r_max: "
          f"constants are not in the class)")

sqrt_t = InvSqrtTimeField(1.0, (1.0, 0.0, 0.0))
s = CylinderSampling(dyadic_radii(0.25, 3),
                     ((0.0, (0.0, 0.0, 0.0)), (0.5, (0.0, 0.0, 0.0))), 600)
est = morrey_norm(sqrt_t, 1.5, s)
print(f"\n1/sqrt(t) drift: finite norm {est.value:.3f}, attained at the "
      f"t = 0 anchor (time singularity drives the sup)")

print("\nMixed-integrability classification d/p + 2/l vs 1:")
for (p, l) in ((6.0, 6.0), (3.0, np.inf), (2.0, 2.0)):
    r = lps_classify(p, l, 3)
    print(f"  p = {p}, l = {l}: exponent {r.exponent:.3f} -> {r.classification}")
