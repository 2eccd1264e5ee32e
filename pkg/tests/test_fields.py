import json

import numpy as np
import pytest

from morreylab import fields
from morreylab.fields import (
    ConstantField,
    HardyField,
    InvSqrtTimeField,
    ScaledField,
    SumField,
    eval_field,
    fractional_power_vector,
    hardy_criticality,
    hardy_regularization_radius,
    regularize,
    split_field,
)
from morreylab.rng import generator


def test_hardy_value_matches_radial_formula():
    b = HardyField(delta=1.0, dimension=3)
    v = eval_field(b, 0.0, np.array([0.5, 0.0, 0.0]))
    # magnitude sqrt(delta) (d-2)/2 / |x| = 1.0, radial direction as stored
    assert np.allclose(v, [1.0, 0.0, 0.0])
    assert np.isclose(np.linalg.norm(v), 1.0)


def test_hardy_vanishes_outside_cutoff_and_at_origin():
    b = HardyField(delta=1.0, dimension=3)
    assert np.allclose(eval_field(b, 0.0, np.array([1.5, 0.0, 0.0])), 0.0)
    assert np.allclose(eval_field(b, 0.0, np.array([1.0, 0.0, 0.0])), 0.0)
    assert np.allclose(eval_field(b, 0.0, np.zeros(3)), 0.0)


def test_regularized_hardy_threshold():
    b = HardyField(delta=1.0, dimension=3)
    bn = regularize(b, 2.0)
    # |b(x)| = (d-2) sqrt(delta) / (2 |x|); threshold radius 0.25 for n = 2
    assert np.isclose(hardy_regularization_radius(b, 2.0), 0.25)
    inner = eval_field(bn, 0.0, np.array([0.5, 0.0, 0.0]))
    assert np.allclose(inner, [1.0, 0.0, 0.0])  # |b| = 1 <= 2 unchanged
    cut = eval_field(bn, 0.0, np.array([0.1, 0.0, 0.0]))
    assert np.allclose(cut, 0.0)  # |b| = 5 > 2 zeroed


def test_regularize_bounds_and_identity_region():
    b = HardyField(delta=1.0, dimension=3)
    rng = generator(7, 0)
    pts = rng.uniform(-1.2, 1.2, size=(4000, 3))
    for n in (0.5, 1.0, 3.0):
        vals = eval_field(regularize(b, n), 0.0, pts)
        mags = np.linalg.norm(vals, axis=-1)
        assert mags.max() <= n + 1e-12
        raw = eval_field(b, 0.0, pts)
        keep = np.linalg.norm(raw, axis=-1) <= n
        assert np.allclose(vals[keep], raw[keep])


def test_regularize_monotone_in_level():
    b = HardyField(delta=0.7, dimension=3)
    rng = generator(8, 0)
    pts = rng.uniform(-1, 1, size=(2000, 3))
    mags = {}
    for n in (0.5, 1.0, 2.0, 8.0):
        mags[n] = np.linalg.norm(eval_field(regularize(b, n), 0.0, pts), axis=-1)
    raw = np.linalg.norm(eval_field(b, 0.0, pts), axis=-1)
    assert np.all(mags[0.5] <= mags[1.0] + 1e-15)
    assert np.all(mags[1.0] <= mags[2.0] + 1e-15)
    assert np.all(mags[8.0] <= raw + 1e-15)


def test_constant_regularized_is_identity():
    b = ConstantField((0.3, 0.0, 0.4))  # |b| = 0.5
    bn = regularize(b, 1.0)
    pts = np.array([[0.1, 0.2, 0.3], [5.0, 5.0, 5.0]])
    assert np.allclose(eval_field(bn, 0.0, pts), eval_field(b, 0.0, pts))


def test_scaled_homogeneity_exact():
    b = HardyField(delta=0.25, dimension=3)
    rng = generator(9, 0)
    pts = rng.uniform(-1, 1, size=(500, 3))
    lhs = eval_field(ScaledField(2.5, b), 0.0, pts)
    rhs = 2.5 * eval_field(b, 0.0, pts)
    assert np.array_equal(lhs, rhs)


def test_sum_and_split_partition_identity():
    b = SumField((HardyField(delta=0.5, dimension=3), ConstantField((0.1, 0.0, 0.0))))
    singular, bounded = split_field(b, 0.8)
    rng = generator(10, 0)
    pts = rng.uniform(-1.5, 1.5, size=(3000, 3))
    total = eval_field(singular, 0.0, pts) + eval_field(bounded, 0.0, pts)
    assert np.allclose(total, eval_field(b, 0.0, pts))
    mags = np.linalg.norm(eval_field(bounded, 0.0, pts), axis=-1)
    assert mags.max() <= 0.8 + 1e-12
    # singular part vanishes wherever |b| <= bound
    raw_mag = np.linalg.norm(eval_field(b, 0.0, pts), axis=-1)
    s = eval_field(singular, 0.0, pts)
    assert np.allclose(s[raw_mag <= 0.8], 0.0)


def test_split_bounded_everywhere_gives_zero_singular():
    b = ConstantField((0.2, 0.1, 0.0))
    singular, bounded = split_field(b, 1.0)
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    assert np.allclose(eval_field(singular, 0.0, pts), 0.0)
    assert np.allclose(eval_field(bounded, 0.0, pts), eval_field(b, 0.0, pts))


def test_hardy_split_threshold_radius():
    b = HardyField(delta=1.0, dimension=3)
    singular, _ = split_field(b, 2.0)
    # support of the singular part is |x| < (d-2) sqrt(delta) / (2 n) = 0.25
    v_in = eval_field(singular, 0.0, np.array([0.2, 0.0, 0.0]))
    v_out = eval_field(singular, 0.0, np.array([0.3, 0.0, 0.0]))
    assert np.linalg.norm(v_in) > 0
    assert np.allclose(v_out, 0.0)


def test_inv_sqrt_time_profile():
    b = InvSqrtTimeField(amplitude=2.0, direction=(1.0, 0.0, 0.0))
    x = np.zeros(3)
    assert np.allclose(eval_field(b, 4.0, x), [1.0, 0.0, 0.0])
    assert np.allclose(eval_field(b, 0.0, x), 0.0)
    assert np.allclose(eval_field(b, -1.0, x), 0.0)


def test_fractional_power_vector_examples():
    v = np.array([2.0, 0.0, 0.0])
    assert np.allclose(fractional_power_vector(v, 2.0), [np.sqrt(2.0), 0.0, 0.0])
    assert np.allclose(fractional_power_vector(np.zeros(3), 3.0), 0.0)
    v = np.array([0.0, 3.0, 4.0])
    expect = np.array([0.0, 3.0 / 5.0, 4.0 / 5.0]) * 5.0 ** (1.0 / 5.0)
    assert np.allclose(fractional_power_vector(v, 5.0), expect)


def test_fractional_power_magnitude_identity():
    rng = generator(11, 0)
    v = rng.normal(size=(10_000, 3)) * rng.uniform(0.01, 50, size=(10_000, 1))
    for p in (1.5, 2.0, 5.0, 20.0):
        out = fractional_power_vector(v, p)
        got = np.linalg.norm(out, axis=-1)
        want = np.linalg.norm(v, axis=-1) ** (1.0 / p)
        assert np.allclose(got, want, rtol=1e-12)


def test_hardy_criticality_flag():
    report = hardy_criticality(0.04, 3)
    assert report["threshold"] == pytest.approx(36.0)
    assert not report["supercritical"]
    assert hardy_criticality(36.5, 3)["supercritical"]


def test_grid_sampled_interpolation_and_domain_error():
    from morreylab.grids import LatticeGrid, VectorLattice

    grid = LatticeGrid(dimension=3, half_width=1.0, dx=0.25, t0=0.0, t1=0.1, dt=0.0125)
    pts = grid.space_points()
    vals = np.broadcast_to(pts, (grid.n_time,) + pts.shape).copy()  # b(t,x) = x
    spec = fields.GridSampledField(VectorLattice(grid, vals))
    q = np.array([0.13, -0.42, 0.55])
    assert np.allclose(eval_field(spec, 0.05, q), q, atol=1e-12)  # linear is exact
    with pytest.raises(fields.FieldDomainError):
        eval_field(spec, 0.05, np.array([1.5, 0.0, 0.0]))
    with pytest.raises(fields.FieldDomainError):
        eval_field(spec, 0.5, q)


def test_spec_json_roundtrip():
    spec = ScaledField(2.0, SumField((HardyField(0.04, 3),
                                      ConstantField((0.0, 0.1, 0.0)))))
    doc = fields.spec_to_json(spec)
    back = fields.spec_from_json(doc)
    pts = np.array([[0.3, 0.1, -0.2]])
    assert np.allclose(eval_field(back, 0.0, pts), eval_field(spec, 0.0, pts))
    assert json.loads(doc)["kind"] == "scaled"


def test_unknown_kind_rejected():
    with pytest.raises(fields.FieldConfigError):
        fields.spec_from_dict({"kind": "mystery"})
