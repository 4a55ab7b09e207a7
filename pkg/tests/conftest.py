import numpy as np
import pytest

from kirchhoff.constants import KirchhoffParams
from kirchhoff.radial import field_from_free, make_grid


@pytest.fixture
def grid4():
    return make_grid(4, 1.0, 100)


@pytest.fixture
def params_convex():
    # b = 0.2 sits above C_4 = 3/(2 pi^2): strictly convex regime
    return KirchhoffParams(a=1.0, b=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_field(grid, rng, scale=1.0):
    """Dirichlet field with Gaussian nodal values at a given amplitude."""
    return field_from_free(grid, scale * rng.standard_normal(grid.n_nodes - 1))
