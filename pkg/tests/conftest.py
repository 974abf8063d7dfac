import warnings

import numpy as np
import pytest

from vecpot.generators import poly_bump_grad
from vecpot.grid_fields import GridSpec, VectorField
from vecpot.newton_potential import MarginWarning


def order(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def curl_bump(n, dim, radius=0.46, power=8):
    """v = scurl of A_12 = bump on [-1, 1]^dim: divergence-free and compactly supported."""
    grid = GridSpec.box(n, -1.0, 1.0, dim)
    gb = poly_bump_grad(grid.coords(), np.zeros(dim), radius, power)
    data = np.zeros((dim, *grid.shape))
    data[0], data[1] = 2.0 * gb[1], -2.0 * gb[0]
    return VectorField(grid, data)


def grad_bump(n, dim, radius=0.9, power=4):
    grid = GridSpec.box(n, -1.0, 1.0, dim)
    return VectorField(grid, poly_bump_grad(grid.coords(), np.zeros(dim), radius, power))


@pytest.fixture
def quiet_margin():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MarginWarning)
        yield
