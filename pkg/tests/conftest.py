import numpy as np
import pytest

from morreylab.grids import LatticeGrid


@pytest.fixture(scope="session")
def desk_grid():
    """The pinned desk-scale grid: 17^3 spatial nodes, 65 time nodes."""
    return LatticeGrid(dimension=3, half_width=2.0, dx=0.25, t0=0.0, t1=0.64, dt=0.01)


@pytest.fixture(scope="session")
def small_grid():
    """A cheaper 9^3 x 17 grid for expensive property sweeps."""
    return LatticeGrid(dimension=3, half_width=1.0, dx=0.25, t0=0.0, t1=0.16, dt=0.01)


@pytest.fixture()
def interior():
    def cut(grid, space_margin=4, time_margin=2):
        return grid.interior_slices(space_margin, time_margin)
    return cut


@pytest.fixture(autouse=True)
def _no_invalid_warnings():
    with np.errstate(over="raise"):
        yield
