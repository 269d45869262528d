import warnings

import numpy as np
import pytest

from smcf.grid import make_grid
from smcf.config import DataSpec, build_initial_data


def make_bump(grid, s, amplitude=0.01, width=4.0):
    """Mean-zero spectrally clean bump normalized to ||psi||_{H^s} = amplitude."""
    _, psi = build_initial_data(
        grid, DataSpec(kind="gaussian-bump", amplitude=amplitude, width=width), s)
    return psi


def rand_smooth(grid, seed=0, width=3.0, cplx=False):
    """Seeded band-limited random field with unit sup norm, zero mean."""
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coef *= np.exp(-grid.xi_sq * width**2 / 2) * grid.dealias_mask
    coef.flat[0] = 0.0
    f = grid.ifft(coef)
    if not cplx:
        f = f.real
    m = np.abs(f).max()
    return f / m if m > 0 else f


def rand_sym2(grid, seed=0, scale=1.0, width=3.0, cplx=False):
    d = grid.d
    out = np.empty((d, d) + grid.shape,
                   dtype=np.complex128 if cplx else np.float64)
    k = 0
    for a in range(d):
        for b in range(a, d):
            f = rand_smooth(grid, seed=seed * 101 + k, width=width, cplx=cplx)
            out[a, b] = scale * f
            out[b, a] = scale * f
            k += 1
    return out


@pytest.fixture(scope="session")
def grid2():
    return make_grid(2, 16, 16.0)


@pytest.fixture(scope="session")
def grid3():
    return make_grid(3, 16, 16.0)


@pytest.fixture(scope="session")
def grid2_small():
    return make_grid(2, 8, 16.0)


@pytest.fixture(autouse=True)
def _quiet_smallness_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=r".*smallness threshold.*")
        yield
