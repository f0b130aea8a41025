import numpy as np
import pytest

from src.errors import GridError, ParameterError
from src.paths import (
    PathGrid,
    RngStream,
    TimeGrid,
    bridge_refine,
    derive_stream,
    extend_brownian_path,
    last_exit_time,
    sample_bessel3_path,
    sample_brownian_path,
)


@pytest.mark.parametrize("points", [[], [1.0, 2.0], [0.0, 0.0], [0.0, 2.0, 1.0], [0.0, np.inf]])
def test_invalid_grid(points):
    with pytest.raises(GridError):
        TimeGrid(points)


def test_brownian_path_on_trivial_grid(rng):
    path = sample_brownian_path(2, TimeGrid([0.0]), rng)
    assert path.values.shape == (1, 2)
    assert np.array_equal(path.values, [[0.0, 0.0]])


def test_bessel_path_on_trivial_grid(rng):
    path = sample_bessel3_path(TimeGrid([0.0]), rng)
    assert path.is_scalar
    assert np.array_equal(path.values, [0.0])


def test_bessel_path_is_non_negative(rng):
    path = sample_bessel3_path(TimeGrid.uniform(10.0, 1000), rng)
    assert path.values[0] == 0.0
    assert np.all(path.values >= 0)


def test_brownian_increment_variance(rng):
    path = sample_brownian_path(1, TimeGrid.uniform(4000.0, 4000), rng)
    increments = np.diff(path.values[:, 0])
    assert abs(increments.mean()) < 0.1
    assert increments.var() == pytest.approx(1.0, abs=0.1)


def test_derive_stream_appends_index():
    assert derive_stream(RngStream(7), 0) == RngStream(7, (0,))
    assert RngStream(7, (3,)).child(1).stream_path == (3, 1)


def test_same_stream_same_draws():
    a = derive_stream(RngStream(7), 0).generator().standard_normal(1000)
    b = derive_stream(RngStream(7), 0).generator().standard_normal(1000)
    assert np.array_equal(a, b)


def test_sibling_streams_differ():
    a = derive_stream(RngStream(7), 0).generator().standard_normal(1000)
    b = derive_stream(RngStream(7), 1).generator().standard_normal(1000)
    assert not np.any(a == b)


def test_invalid_seed_and_index():
    with pytest.raises(ParameterError):
        RngStream(-1)
    with pytest.raises(ParameterError):
        derive_stream(RngStream(1), -1)


def test_bridge_refine_keeps_grid_values(rng):
    path = sample_brownian_path(2, TimeGrid.uniform(1.0, 4), rng.child(0))
    refined = bridge_refine(path, [0.1, 0.3, 0.31, 0.9], rng.child(1))
    assert len(refined.grid) == len(path.grid) + 4
    kept = np.searchsorted(refined.times, path.times)
    assert np.array_equal(refined.values[kept], path.values)


def test_bridge_refine_outside_horizon(rng):
    path = sample_brownian_path(1, TimeGrid.uniform(1.0, 4), rng)
    with pytest.raises(GridError):
        bridge_refine(path, [2.0], rng)


def test_extend_keeps_prefix(rng):
    path = sample_brownian_path(3, TimeGrid.uniform(1.0, 4), rng.child(0))
    extended = extend_brownian_path(path, [2.0, 4.0], rng.child(1))
    assert extended.grid.horizon == 4.0
    assert np.array_equal(extended.values[: len(path.grid)], path.values)


def test_last_exit_time():
    path = PathGrid(TimeGrid([0.0, 1.0, 2.0, 3.0]), [0.0, 5.0, 1.0, 3.0])
    assert last_exit_time(path, 2.0) == 2.0
    assert last_exit_time(path, 0.5) == 0.0
    assert last_exit_time(path, 10.0) == 3.0


def test_norm_of_vector_path():
    path = PathGrid(TimeGrid([0.0, 1.0]), [[0.0, 0.0], [3.0, 4.0]])
    assert np.array_equal(path.norm().values, [0.0, 5.0])
    assert path.component(1).values[1] == 4.0
