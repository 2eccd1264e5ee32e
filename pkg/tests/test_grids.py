import numpy as np
import pytest

from morreylab.grids import (
    LatticeError,
    LatticeGrid,
    ScalarLattice,
    VectorLattice,
    lattice_p_norm,
    load_lattice,
    save_lattice,
)
from morreylab.rng import generator, stream_key


def test_grid_counts_and_axes(desk_grid):
    assert desk_grid.n_space == 17
    assert desk_grid.n_time == 65
    assert desk_grid.shape == (65, 17, 17, 17)
    x = desk_grid.x_axis()
    assert x[0] == -2.0 and x[-1] == 2.0
    assert 0.0 in x


def test_grid_validation():
    with pytest.raises(LatticeError):
        LatticeGrid(3, 2.0, 0.25, 0.0, 0.64, -0.01)
    with pytest.raises(LatticeError):
        LatticeGrid(3, 2.0, 0.25, 0.0, 0.643, 0.01)  # non-integral steps
    with pytest.raises(LatticeError):
        LatticeGrid(3, 0.5, 0.25, 0.0, 0.64, 0.01)  # only 5 space nodes


def test_lattice_shape_and_finite_guard(small_grid):
    with pytest.raises(LatticeError):
        ScalarLattice(small_grid, np.zeros((3, 3)))
    bad = np.zeros(small_grid.shape)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(LatticeError):
        ScalarLattice(small_grid, bad)
    with pytest.raises(LatticeError):
        VectorLattice(small_grid, np.zeros(small_grid.shape))


def test_lattice_file_roundtrip(tmp_path, small_grid):
    rng = np.random.default_rng(3)
    values = rng.normal(size=small_grid.shape)
    save_lattice(tmp_path / "field", values, small_grid, meta={"tag": "x"})
    back, grid, meta = load_lattice(tmp_path / "field")
    assert np.array_equal(back, values)
    assert grid.fingerprint() == small_grid.fingerprint()
    assert meta == {"tag": "x"}
    header = (tmp_path / "field.json").read_text()
    assert '"byteorder": "little"' in header


def test_p_norm_measure(small_grid):
    ones = np.ones(small_grid.shape)
    total = small_grid.measure() * np.prod(small_grid.shape)
    assert lattice_p_norm(ones, small_grid, 2.0) == pytest.approx(np.sqrt(total))


def test_stream_keys_distinct_and_stable():
    k1 = stream_key(7, 0, 1)
    k2 = stream_key(7, 0, 2)
    k3 = stream_key(8, 0, 1)
    assert k1 != k2 and k1 != k3
    assert stream_key(7, 0, 1) == k1
    g = generator(7, 0, 1)
    a = g.standard_normal(4)
    b = generator(7, 0, 1).standard_normal(4)
    assert np.array_equal(a, b)
