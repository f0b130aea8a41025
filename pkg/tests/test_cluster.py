import math

import numpy as np
import pytest

from src.bbm import SQRT2
from src.cluster import (
    BranchingTimes,
    GrTable,
    assemble_cluster,
    build_gr_table,
    compute_XL,
    conditioning_acceptance,
    right_tail_bound,
    sample_branching_times,
    sample_conditioned_cloud,
    sample_front_inputs,
    sample_spine,
    simplified_front,
    simulate_limit_cluster,
    spine_grid,
    window_bounds,
)
from src.errors import AssemblyError, BudgetError, ConfigurationError, ParameterError, TruncationError
from src.front import theta_grid
from src.paths import TimeGrid
from src.rho import truncation_sigma
from src.stats import poisson_gof
from src.utils import IntensityModes, SpineModes


@pytest.fixture
def table() -> GrTable:
    return GrTable(
        r_grid=np.array([1.0, 2.0]),
        x_grid=np.array([-10.0, 10.0]),
        values=np.array([[0.0, 0.5], [0.5, 1.0]]),
        stderr=np.zeros((2, 2)),
        replicas=100,
    )


@pytest.fixture
def spine(rng):
    return sample_spine(SpineModes.APPROXIMATE, 10.0, TimeGrid.uniform(10.0, 200), 2, rng)


def test_right_tail_bound_is_a_probability():
    x = np.linspace(-30, 30, 61)
    bound = right_tail_bound(5.0, x)
    assert np.all((bound >= 0) & (bound <= 1))
    assert np.all(np.diff(bound) >= 0)
    assert bound[-1] == 1.0


def test_table_indicator_at_zero(table):
    assert np.array_equal(table.value(0.0, [-1.0, 0.0, 1.0]), [0.0, 1.0, 1.0])


def test_table_interpolation(table):
    assert table.simulated_until == 2.0
    assert table.value(1.5, 0.0)[0] == pytest.approx(0.5)
    assert table.value(3.0, 0.0)[0] == pytest.approx(right_tail_bound(3.0, np.array([0.0]))[0])


def test_table_csv(table, tmp_path):
    path = str(tmp_path / "gr.csv")
    table.to_csv(path)
    loaded = GrTable.from_csv(path)
    assert np.array_equal(loaded.values, table.values)
    assert np.array_equal(loaded.r_grid, table.r_grid)


def test_build_table(rng):
    x_far = 10 * SQRT2 * 0.5
    table = build_gr_table([0.5], [-5.0, 0.0, x_far], 100, rng)
    assert table.value(0.5, x_far)[0] >= 0.99
    assert np.all(np.diff(table.values[0]) >= 0)
    with pytest.raises(ParameterError):
        build_gr_table([0.5], [0.0], 10, rng)


def test_approximate_spine(spine):
    times = spine.grid.points
    assert spine.A_hat[0] == 0.0
    assert np.all(spine.A_hat >= 0)
    assert np.allclose(spine.A, -SQRT2 * times - spine.A_hat)
    assert spine.Y.shape == (len(spine.grid), 1)
    assert spine.weight == 1.0


def test_spine_at_grid_and_between(spine, rng):
    a_values, y_values = spine.at(np.array([2.5, 2.51]), rng)
    assert a_values.shape == (2,)
    assert y_values.shape == (2, 1)
    assert np.all(a_values <= -SQRT2 * np.array([2.5, 2.51]))


def test_tilted_spine_stays_below_b(rng, table):
    spine = sample_spine(SpineModes.TILTED, 5.0, TimeGrid.uniform(5.0, 100), 2, rng, gr=table)
    gamma = spine.A + SQRT2 * spine.grid.points
    assert spine.b > 0
    assert np.max(gamma) <= spine.b + 1e-12
    assert np.allclose(spine.A_hat, -gamma)
    assert 0 < spine.tilt <= 1
    assert spine.weight > 0
    assert 0 <= spine.tail_bias <= 1


def test_tilted_spine_needs_table(rng):
    with pytest.raises(ConfigurationError):
        sample_spine(SpineModes.TILTED, 1.0, TimeGrid.uniform(1.0, 10), 2, rng)
    with pytest.raises(ConfigurationError):
        sample_spine("sideways", 1.0, TimeGrid.uniform(1.0, 10), 2, rng)


def test_branching_times_at_horizon_zero(spine, rng):
    assert len(sample_branching_times(spine, 0.0, rng)) == 0


def test_tilted_times_are_a_subset(spine, rng, table):
    rate2 = sample_branching_times(spine, 10.0, rng.child(1))
    tilted = sample_branching_times(spine, 10.0, rng.child(1), IntensityModes.TILTED, table)
    assert tilted.proposed == rate2.proposed
    assert np.all(np.isin(tilted.times, rate2.times))
    with pytest.raises(ConfigurationError):
        sample_branching_times(spine, 10.0, rng, IntensityModes.TILTED)


def test_rate2_counts_are_poisson(spine, rng):
    counts = [sample_branching_times(spine, 2.0, rng.child(k)).proposed for k in range(500)]
    assert poisson_gof(counts, 4.0) > 1e-3


def test_conditioned_cloud_of_duration_zero(rng):
    sample = sample_conditioned_cloud(0.0, -1.0, np.array([0.5]), 2, rng)
    assert np.array_equal(sample.cloud.coords, [[-1.0, 0.5]])
    assert sample.accepted_after == 0
    with pytest.raises(BudgetError) as error:
        sample_conditioned_cloud(0.0, 0.0, np.array([0.5]), 2, rng)
    assert error.value.acceptance_rate == 0.0
    assert "after 1 attempts" in str(error.value)


def test_budget_error_reports_acceptance_rate(rng):
    with pytest.raises(BudgetError) as error:
        sample_conditioned_cloud(0.01, 10.0, np.array([0.0]), 2, rng, max_rejects=3)
    assert error.value.acceptance_rate == 0.0
    assert error.value.payload()["acceptance_rate"] == 0.0
    assert error.value.exit_code == 4
    assert "after 3 attempts" in str(error.value)


def test_conditioned_cloud_is_behind(rng):
    sample = sample_conditioned_cloud(1.0, -0.5, np.array([0.0]), 2, rng)
    assert sample.cloud.coords[:, 0].max() < 0
    with pytest.raises(ParameterError):
        sample_conditioned_cloud(1.0, -0.5, np.array([0.0]), 2, rng, floor=1.0)


def test_conditioning_far_behind_always_accepts(rng):
    assert conditioning_acceptance(1.0, -10.0, 2, 20, rng) == 1.0


def test_assemble_without_branching(spine):
    cluster = assemble_cluster(spine, BranchingTimes(np.zeros(0), IntensityModes.RATE2), [])
    assert len(cluster) == 1
    assert cluster.tags == ["origin"]
    assert np.array_equal(cluster.coords, [[0.0, 0.0]])


def test_assemble_mismatch(spine, rng):
    times = BranchingTimes(np.array([0.5]), IntensityModes.RATE2)
    with pytest.raises(AssemblyError):
        assemble_cluster(spine, times, [])
    cloud = sample_conditioned_cloud(0.7, -1.0, np.array([0.0]), 2, rng)
    with pytest.raises(AssemblyError):
        assemble_cluster(spine, times, [cloud])


def test_limit_cluster(rng):
    sample = simulate_limit_cluster(2, 1.0, rng)
    cluster = sample.cluster
    assert len(sample.clouds) == len(sample.times)
    assert cluster.tags[0] == "origin"
    assert len(cluster) == 1 + sum(len(c.cloud) for c in sample.clouds)
    assert np.all(cluster.coords[1:, 0] < 0)
    assert set(cluster.tags[1:]) <= {f"cloud_{i}" for i in range(1, len(sample.times) + 1)}


def test_xl_at_zero(spine):
    xl = compute_XL(spine, 1.0, [0.0, 0.5, 1.0], sigma_max=10.0)
    assert xl[0] == 0.0
    assert np.all(np.diff(xl) >= 0)


def test_xl_truncation(spine):
    with pytest.raises(TruncationError) as error:
        compute_XL(spine, 1.0, [0.0, 1.0])
    assert error.value.required == pytest.approx(truncation_sigma(1.0, 1e-3))


def test_simplified_front_empty_window(spine):
    times = BranchingTimes(np.array([1.0, 2.0]), IntensityModes.RATE2)
    front = simplified_front(spine, times, [None, None], 3.0, 0.1, [0.0, 0.5, 1.0], theta_grid(2, 1))
    assert front.heights.shape == (3, 2)
    assert np.all(front.heights == 0)


def test_window_and_grid(spine):
    start, end = window_bounds(spine, 3.0, 1.0)
    assert start == pytest.approx(3.0**1.4)
    assert 0 <= end <= spine.horizon
    grid = spine_grid(3.0, 1.0)
    assert grid.horizon == pytest.approx(truncation_sigma(1.0, 1e-3) * 9.0)
    with pytest.raises(ParameterError):
        spine_grid(0.0, 1.0)


@pytest.mark.slow
def test_front_inputs(rng):
    sample = sample_front_inputs(2, 2.0, 1.0, rng, prune_delta=1e-4)
    start, end = sample.window
    assert sample.cluster is None
    for tau, cloud in zip(sample.times.times, sample.clouds):
        assert (cloud is None) == (not start <= tau <= end)
    front = simplified_front(sample.spine, sample.times, sample.clouds, 2.0, 0.1, [0.25, 0.5, 1.0], theta_grid(2, 1))
    assert np.all(front.heights >= 0)
    assert math.isfinite(sample.pruning_bias)
