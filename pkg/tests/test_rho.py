import numpy as np
import pytest

from src.errors import ConfigurationError, ParameterError
from src.front import theta_grid
from src.paths import PathGrid, TimeGrid
from src.rho import (
    SigmaGridSpec,
    last_exit_tail,
    legendre_sup,
    revolve_surface,
    sample_rho,
    truncation_sigma,
)

SIGMA_GRID = SigmaGridSpec(points=512, refine_points=16)


def test_legendre_sup_at_zero_slope():
    path = PathGrid(TimeGrid([0.0, 1.0, 2.0]), [0.0, 0.3, 0.1])
    assert legendre_sup(path, 0.0) == (0.0, 0.0)


def test_legendre_sup_is_grid_truncated():
    path = PathGrid(TimeGrid([0.0, 1.0, 2.0]), [0.0, 0.0, 0.0])
    assert legendre_sup(path, 1.0) == (2.0, 2.0)


def test_legendre_sup_rejects_negative_slope():
    path = PathGrid(TimeGrid([0.0, 1.0]), [0.0, 0.0])
    with pytest.raises(ParameterError):
        legendre_sup(path, -1.0)


@pytest.mark.parametrize("s_max, tail", [(1.0, 1e-3), (4.0, 1e-2)])
def test_truncation_rule_meets_its_tail(s_max, tail):
    assert last_exit_tail(s_max, truncation_sigma(s_max, tail)) == pytest.approx(tail, rel=1e-9)


def test_rho_profile_shape(rng):
    s_grid = np.linspace(0.0, 4.0, 17)
    sample = sample_rho(s_grid, None, SIGMA_GRID, rng)
    squared = sample.rho**2
    assert sample.rho[0] == 0.0
    assert np.all(np.diff(sample.rho) >= 0)
    assert np.all(squared[1:-1] <= 0.5 * (squared[:-2] + squared[2:]) + 1e-9)
    assert sample.truncation_bound <= SIGMA_GRID.truncation_tail * (1 + 1e-9)


def test_rho_is_deterministic(rng):
    a = sample_rho([0.5, 1.0], None, SIGMA_GRID, rng)
    b = sample_rho([0.5, 1.0], None, SIGMA_GRID, rng)
    assert np.array_equal(a.rho, b.rho)
    assert np.array_equal(a.argmax_sigma, b.argmax_sigma)


def test_sigma_horizon_below_grid(rng):
    with pytest.raises(ConfigurationError):
        sample_rho([1.0], 1e-5, SIGMA_GRID, rng)


def test_revolved_surface_in_the_plane(rng):
    surface = revolve_surface(sample_rho([0.0, 1.0, 2.0], None, SIGMA_GRID, rng), theta_grid(2, 1))
    assert surface.heights.shape == (3, 2)
    assert np.array_equal(surface.column(0), surface.column(1))


def test_sigma_grid_from_config():
    grid = SigmaGridSpec.from_config({"sigma_points": 128, "sigma_min": 1e-3})
    assert grid.points == 128
    assert grid.sigma_min == 1e-3
    assert grid.refine_points == SigmaGridSpec.refine_points


def _legendre_by_scan(times: np.ndarray, values: np.ndarray, s: float) -> tuple[float, float]:
    best, argmax = 0.0, 0.0
    for sigma, value in zip(times, values):
        term = sigma * (s - value)
        if term > best:
            best, argmax = term, sigma
    return best, argmax


def test_legendre_sup_matches_exhaustive_scan(rng):
    for k in range(50):
        gen = rng.child(k).generator()
        # integer grids and values, so that ties between optimizers are frequent and exact
        times = np.concatenate([[0.0], np.cumsum(gen.integers(1, 4, 19))]).astype(float)
        values = gen.integers(0, 6, 20).astype(float)
        values[0] = 0.0
        path = PathGrid(TimeGrid(times), values)
        for s in np.arange(0.0, 7.0, 0.5):
            assert legendre_sup(path, s) == _legendre_by_scan(times, values, s)
