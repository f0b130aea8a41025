import math

import numpy as np
import pytest

from src.errors import DegenerateInputError, NormalizationError, ParameterError, PreconditionError
from src.front import (
    PointCloud,
    extremal_cluster,
    extremal_landscape,
    front_of_bbm,
    front_of_point_process,
    rotation_to_e1,
    theta_grid,
)
from src.bbm import simulate_bbm
from src.utils import ConeModes
from tests.conftest import make_tree


def test_rotation_fixes_e1():
    assert np.allclose(rotation_to_e1(np.array([1.0, 0.0, 0.0])), np.eye(3))


def test_rotation_in_the_plane():
    rotation = rotation_to_e1(np.array([0.0, 1.0]))
    givens = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert np.allclose(rotation, givens)
    assert np.allclose(rotation @ [0.0, 1.0], [1.0, 0.0])
    assert np.allclose(rotation @ [-1.0, 0.0], [0.0, 1.0])


def test_rotation_of_antipode():
    rotation = rotation_to_e1(np.array([-1.0, 0.0, 0.0]))
    assert np.allclose(rotation @ [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert np.linalg.det(rotation) == pytest.approx(1.0)


def test_rotation_is_orthogonal_and_fixes_complement():
    theta = np.array([0.5, 0.5, 0.5, 0.5])
    rotation = rotation_to_e1(theta)
    assert np.allclose(rotation @ rotation.T, np.eye(4))
    assert np.allclose(rotation @ theta, [1.0, 0.0, 0.0, 0.0])
    assert np.linalg.det(rotation) == pytest.approx(1.0)
    w = np.array([0.0, 1.0, -1.0, 0.0])
    assert np.allclose(rotation @ w, w)


def test_rotation_rejects_non_unit():
    with pytest.raises(NormalizationError):
        rotation_to_e1(np.array([1.0, 1.0]))


def test_theta_grid():
    assert np.array_equal(theta_grid(2, 8), [[1.0], [-1.0]])
    grid = theta_grid(3, 4)
    assert grid.shape == (4, 2)
    assert np.allclose(np.linalg.norm(grid, axis=1), 1.0)
    assert theta_grid(4, 3).shape == (9, 3)
    with pytest.raises(ParameterError):
        theta_grid(1, 4)


def test_single_leaf_cluster_is_the_origin():
    tree = make_tree(parent=[-1], birth_time=[0.0], final_time=[1.0], final_position=[[1.0, 2.0]], horizon=1.0)
    cluster = extremal_cluster(tree)
    assert len(cluster) == 1
    assert np.array_equal(cluster.coords, [[0.0, 0.0]])


def test_extremal_cluster_is_behind_the_origin(rng):
    tree = simulate_bbm(3, 4.0, rng)
    cluster = extremal_cluster(tree)
    assert len(cluster) == tree.leaf_ids.size
    assert cluster.origin_index() is not None
    assert cluster.coords[:, 0].max() <= 1e-9


def test_front_of_point_process_slabs():
    cloud = PointCloud(np.array([[0.0, 0.0], [-4.5, 1.0], [-4.8, -3.0]]))
    theta_set = theta_grid(2, 1)
    front = front_of_point_process(cloud, 0.1, 1.0, [0.5, 5.0], theta_set)
    # empty slab: maximum of the empty set is 0
    assert np.array_equal(front.heights[0], [0.0, 0.0])
    assert np.array_equal(front.heights[1], [1.0, 3.0])
    absolute = front_of_point_process(cloud, 0.1, 1.0, [0.5, 5.0], theta_set, ConeModes.ABSOLUTE)
    assert np.array_equal(absolute.heights[1], [3.0, 3.0])


def test_front_preconditions():
    theta_set = theta_grid(2, 1)
    with pytest.raises(PreconditionError):
        front_of_point_process(PointCloud(np.array([[-1.0, 1.0]])), 0.1, 1.0, [1.0], theta_set)
    with pytest.raises(ParameterError):
        front_of_point_process(PointCloud(np.array([[0.0, 0.0]])), 1.5, 1.0, [1.0], theta_set)


def test_front_of_bbm_needs_positive_horizon(rng):
    with pytest.raises(DegenerateInputError):
        front_of_bbm(simulate_bbm(2, 0.0, rng), 0.1, 1.0, [1.0], theta_grid(2, 1))


def test_front_of_bbm_is_non_negative(rng):
    front = front_of_bbm(simulate_bbm(3, 5.0, rng), 0.3, 1.0, np.linspace(0, 3, 7), theta_grid(3, 4))
    assert front.heights.shape == (7, 4)
    assert np.all(front.heights >= 0)
    assert front.dim == 3


def test_landscape_singleton_clans(cherry):
    entries = extremal_landscape(cherry, 0.2)
    assert [e.particle_id for e in entries] == [2, 1]
    for entry in entries:
        assert entry.cluster.origin_index() is not None
        assert np.linalg.norm(entry.direction) == pytest.approx(1.0)


def test_landscape_depth_out_of_range(cherry):
    with pytest.raises(ParameterError):
        extremal_landscape(cherry, 1.0)


def _front_by_scan(coords, epsilon, slab_width, s_grid, theta_set, cone_mode) -> np.ndarray:
    heights = np.zeros((len(s_grid), len(theta_set)))
    for i, s in enumerate(s_grid):
        for j, theta in enumerate(theta_set):
            for point in coords:
                transversal = point[1:]
                radius = math.sqrt(sum(c * c for c in transversal))
                if radius == 0 or not -s < point[0] <= -s + slab_width:
                    continue
                cosine = sum(a * b for a, b in zip(transversal, theta)) / radius
                if cone_mode == ConeModes.ABSOLUTE:
                    cosine = abs(cosine)
                if cosine >= 1.0 - epsilon:
                    heights[i, j] = max(heights[i, j], radius)
    return heights


def _random_cloud(dim: int, gen: np.random.Generator) -> np.ndarray:
    n = int(gen.integers(1, 200))
    # half of the points sit exactly on slab boundaries of the s grid below
    first = np.where(gen.random(n) < 0.5, -0.25 * gen.integers(1, 13, n), -3.2 * gen.random(n) - 1e-6)
    transversal = 2.0 * gen.normal(size=(n, dim - 1))
    return np.vstack([np.zeros(dim), np.column_stack([first, transversal])])


@pytest.mark.parametrize(
    "dim, cone_mode",
    [(2, ConeModes.SIGNED), (2, ConeModes.ABSOLUTE), (3, ConeModes.SIGNED), (4, ConeModes.ABSOLUTE)],
)
def test_front_matches_point_scan(rng, dim, cone_mode):
    s_grid = np.linspace(0.0, 3.0, 13)
    theta_set = theta_grid(dim, 4)
    for k in range(20):
        coords = _random_cloud(dim, rng.child(k).generator())
        front = front_of_point_process(PointCloud(coords), 0.3, 1.0, s_grid, theta_set, cone_mode)
        expected = _front_by_scan(coords, 0.3, 1.0, s_grid, theta_set, cone_mode)
        np.testing.assert_allclose(front.heights, expected, rtol=1e-12, atol=0.0)
