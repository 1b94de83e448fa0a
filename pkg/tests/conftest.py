import numpy as np
import pytest

from driftbound import ScalarField, TorusGrid


def random_band_limited(grid, rng, kmax=None, n_modes=6, amplitude=1.0, zero_mean=False):
    """Random trigonometric polynomial with per-axis mode numbers <= kmax."""
    if kmax is None:
        kmax = max(1, grid.n // 4)
    values = np.zeros(grid.shape)
    if not zero_mean:
        values += amplitude * rng.uniform(-0.3, 0.3)
    coords = grid.coordinates
    for _ in range(n_modes):
        k = rng.integers(-kmax, kmax + 1, size=grid.dim)
        if not np.any(k):
            k[0] = 1
        phase = rng.uniform(0, 2 * np.pi)
        amp = amplitude * rng.uniform(0.2, 1.0) / n_modes
        arg = sum(2 * np.pi * ki * np.broadcast_to(x, grid.shape) for ki, x in zip(k, coords))
        values += amp * np.cos(arg + phase)
    return ScalarField(grid, values)


def random_trials(grid, rng, count, kmax=None, amplitude=1.0, zero_mean=False):
    return [
        random_band_limited(grid, rng, kmax=kmax, amplitude=amplitude, zero_mean=zero_mean)
        for _ in range(count)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid1d():
    return TorusGrid(1, 64)


@pytest.fixture
def grid2d():
    return TorusGrid(2, 32)


@pytest.fixture
def grid3d():
    return TorusGrid(3, 32)
