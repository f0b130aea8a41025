"""Extremal cluster of a BBM, the front of a point process and the extremal landscape."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from src.bbm import BbmTree, clan_leaders, max_norm_particle
from src.errors import DegenerateInputError, NormalizationError, ParameterError, PreconditionError
from src.logger import Logger
from src.utils import ConeModes

logger = Logger(__name__)

UNIT_TOLERANCE = 1e-12
ORIGIN_TOLERANCE = 1e-9


class PointCloud:
    """Finite labeled multiset of points in R^d.

    Args:
        coords (np.ndarray): Points of shape (n, dim).
        tags (Sequence[str] | None, optional): Provenance label per point. Defaults to "point".
        times (np.ndarray | None, optional): Optional time attached to each point
            (branch time of the cloud it came from), NaN where undefined.
        dim (int | None, optional): Dimension, needed only for empty clouds.
    """

    def __init__(
        self,
        coords: np.ndarray,
        tags: Sequence[str] | None = None,
        times: np.ndarray | None = None,
        dim: int | None = None,
    ):
        coords = np.array(coords, dtype=float)
        if coords.size == 0:
            if dim is None:
                raise ParameterError("Dimension is required for an empty point cloud")
            coords = coords.reshape(0, dim)
        if coords.ndim != 2:
            raise ParameterError(f"Point cloud coordinates must be 2D, got shape {coords.shape}")
        if dim is not None and coords.shape[1] != dim:
            raise ParameterError(f"Points have length {coords.shape[1]}, expected {dim}")
        n = coords.shape[0]
        self._coords = coords
        self._tags = list(tags) if tags is not None else ["point"] * n
        self._times = np.array(times, dtype=float) if times is not None else np.full(n, np.nan)
        if len(self._tags) != n or self._times.size != n:
            raise ParameterError("Point cloud tags and times must match the number of points")
        self._coords.flags.writeable = False

    @property
    def dim(self) -> int:
        return self._coords.shape[1]

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    @property
    def tags(self) -> list[str]:
        return list(self._tags)

    @property
    def times(self) -> np.ndarray:
        return self._times

    def origin_index(self) -> int | None:
        """Index of the first point equal to the zero vector (within tolerance).

        Returns:
            int | None: Index or None if the origin is absent.
        """
        close = np.flatnonzero(np.all(np.abs(self._coords) <= ORIGIN_TOLERANCE, axis=1))
        return int(close[0]) if close.size else None

    def __len__(self) -> int:
        return self._coords.shape[0]

    def __repr__(self) -> str:
        return f"PointCloud(dim={self.dim}, points={len(self)})"


@dataclass(frozen=True)
class FrontSurface:
    """Heights of a front over the (s, theta) grid.

    Args:
        s_grid (np.ndarray): Increasing non-negative s values.
        theta_set (np.ndarray): Unit vectors of S^{d-2}, shape (m, d - 1).
        heights (np.ndarray): Non-negative heights, shape (len(s_grid), m).
        epsilon (float): Cone parameter.
        slab_width (float): Width of the first-coordinate window.
        cone_mode (str): Cone membership mode.
    """

    s_grid: np.ndarray
    theta_set: np.ndarray
    heights: np.ndarray
    epsilon: float
    slab_width: float
    cone_mode: str = ConeModes.SIGNED

    @property
    def dim(self) -> int:
        return self.theta_set.shape[1] + 1

    def column(self, theta_index: int) -> np.ndarray:
        return self.heights[:, theta_index]


@dataclass(frozen=True)
class LandscapeEntry:
    """One atom of the extremal landscape: a clan leader seen from itself.

    Args:
        particle_id (int): Leaf id of the clan leader.
        recentered_norm (float): Norm minus m_t(d).
        direction (np.ndarray): Unit direction of the leader.
        cluster (PointCloud): All particles, recentered at the leader and rotated.
    """

    particle_id: int
    recentered_norm: float
    direction: np.ndarray
    cluster: PointCloud


def rotation_to_e1(theta: np.ndarray) -> np.ndarray:
    """Rotation sending theta to e1 and fixing the complement of span{theta, e1}.
    For theta = -e1 the rotation by pi in the (e1, e2) plane is used.

    Args:
        theta (np.ndarray): Unit vector.

    Returns:
        np.ndarray: Orthogonal matrix of shape (d, d).

    Raises:
        NormalizationError: If theta is not a unit vector.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if abs(np.linalg.norm(theta) - 1.0) > UNIT_TOLERANCE:
        raise NormalizationError(f"Direction must be a unit vector, got norm {np.linalg.norm(theta)}")
    d = theta.size
    c = theta[0]
    if 1.0 + c <= UNIT_TOLERANCE:
        rotation = np.eye(d)
        rotation[0, 0] = -1.0
        if d > 1:
            rotation[1, 1] = -1.0
        return rotation
    e1 = np.zeros(d)
    e1[0] = 1.0
    k = np.outer(e1, theta) - np.outer(theta, e1)
    return np.eye(d) + k + (k @ k) / (1.0 + c)


def theta_grid(dim: int, theta_steps: int) -> np.ndarray:
    """Direction set on S^{d-2}: {+1, -1} for d = 2, a hyperspherical product grid
    with theta_steps values per angle otherwise.

    Args:
        dim (int): Spatial dimension, at least 2.
        theta_steps (int): Values per angle.

    Returns:
        np.ndarray: Unit vectors of shape (m, dim - 1).
    """
    if dim < 2:
        raise ParameterError(f"Directions need d >= 2, got {dim}")
    if dim == 2:
        return np.array([[1.0], [-1.0]])
    if theta_steps < 1:
        raise ParameterError(f"theta_steps must be at least 1, got {theta_steps}")
    polar = [(k + 0.5) * math.pi / theta_steps for k in range(theta_steps)]
    azimuth = [2 * math.pi * k / theta_steps for k in range(theta_steps)]
    angle_sets = [polar] * (dim - 3) + [azimuth]
    directions = []
    for angles in itertools.product(*angle_sets):
        vec = np.empty(dim - 1)
        sin_prod = 1.0
        for i, phi in enumerate(angles):
            vec[i] = sin_prod * math.cos(phi)
            sin_prod *= math.sin(phi)
        vec[-1] = sin_prod
        directions.append(vec)
    return np.array(directions)


def _check_front_parameters(dim: int, epsilon: float, slab_width: float, cone_mode: str) -> None:
    if dim < 2:
        raise ParameterError(f"The front is defined for d >= 2, got {dim}")
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if slab_width <= 0:
        raise ParameterError(f"slab_width must be positive, got {slab_width}")
    if cone_mode not in (ConeModes.SIGNED, ConeModes.ABSOLUTE):
        raise ParameterError(f"Unknown cone mode {cone_mode}")


def _check_theta_set(theta_set: np.ndarray, dim: int) -> np.ndarray:
    theta_set = np.asarray(theta_set, dtype=float)
    if theta_set.ndim != 2 or theta_set.shape[1] != dim - 1:
        raise ParameterError(f"theta_set must have shape (m, {dim - 1}), got {theta_set.shape}")
    if np.any(np.abs(np.linalg.norm(theta_set, axis=1) - 1.0) > 1e-9):
        raise NormalizationError("theta_set must contain unit vectors")
    if dim == 2 and not np.all(np.isin(theta_set[:, 0], (1.0, -1.0))):
        raise ParameterError("For d = 2 theta_set must be a subset of {+1, -1}")
    return theta_set


def cone_membership(transversal: np.ndarray, theta_set: np.ndarray, epsilon: float, cone_mode: str) -> np.ndarray:
    """Cone test of each transversal vector against each direction.
    Vectors equal to zero have no argument and are never in a cone.

    Args:
        transversal (np.ndarray): Transversal parts, shape (n, d - 1).
        theta_set (np.ndarray): Directions, shape (m, d - 1).
        epsilon (float): Cone parameter.
        cone_mode (str): Signed or absolute cosine.

    Returns:
        np.ndarray: Boolean matrix of shape (n, m).
    """
    radius = np.linalg.norm(transversal, axis=1)
    has_arg = radius > 0
    args = np.zeros_like(transversal)
    args[has_arg] = transversal[has_arg] / radius[has_arg, None]
    cosine = args @ theta_set.T
    if cone_mode == ConeModes.ABSOLUTE:
        cosine = np.abs(cosine)
    return (cosine >= 1.0 - epsilon) & has_arg[:, None]


def front_of_point_process(
    cloud: PointCloud,
    epsilon: float,
    slab_width: float,
    s_grid: Iterable[float],
    theta_set: np.ndarray,
    cone_mode: str = ConeModes.SIGNED,
) -> FrontSurface:
    """Front of a point process normalized so that its right-most point is the origin:
    for every (s, theta), the largest transversal norm among points whose first
    coordinate lies in (-s, -s + slab_width] and whose transversal direction lies in the
    cone around theta. The maximum of the empty set is 0.

    Args:
        cloud (PointCloud): Points, containing the origin as right-most point.
        epsilon (float): Cone parameter in (0, 1).
        slab_width (float): Slab width.
        s_grid (Iterable[float]): Slab positions.
        theta_set (np.ndarray): Directions, shape (m, d - 1).
        cone_mode (str, optional): Signed or absolute cosine. Defaults to signed.

    Returns:
        FrontSurface: Heights on the grid.

    Raises:
        ParameterError: If a parameter is out of range.
        PreconditionError: If the cloud is not normalized at the origin.
    """
    _check_front_parameters(cloud.dim, epsilon, slab_width, cone_mode)
    theta_set = _check_theta_set(theta_set, cloud.dim)
    s_values = np.asarray(list(s_grid), dtype=float)
    if cloud.origin_index() is None:
        raise PreconditionError("Point cloud must contain the origin")
    if len(cloud) and cloud.coords[:, 0].max() > ORIGIN_TOLERANCE:
        raise PreconditionError("The origin must be the right-most point of the cloud")

    first = cloud.coords[:, 0]
    transversal = cloud.coords[:, 1:]
    radius = np.linalg.norm(transversal, axis=1)
    contribution = np.where(cone_membership(transversal, theta_set, epsilon, cone_mode), radius[:, None], 0.0)

    heights = np.zeros((s_values.size, theta_set.shape[0]))
    for i, s in enumerate(s_values):
        slab = (first > -s) & (first <= -s + slab_width)
        if slab.any():
            heights[i] = contribution[slab].max(axis=0)
    return FrontSurface(
        s_grid=s_values,
        theta_set=theta_set,
        heights=heights,
        epsilon=epsilon,
        slab_width=slab_width,
        cone_mode=cone_mode,
    )


def _recentered_cloud(tree: BbmTree, leaf_id: int, direction: np.ndarray) -> PointCloud:
    rotation = rotation_to_e1(direction)
    shifted = tree.leaf_positions() - tree.final_position[leaf_id]
    coords = shifted @ rotation.T
    # the leader itself maps to the exact zero vector
    coords[np.searchsorted(tree.leaf_ids, leaf_id)] = 0.0
    tags = [f"leaf:{int(v)}" for v in tree.leaf_ids]
    return PointCloud(coords, tags=tags)


def extremal_cluster(tree: BbmTree) -> PointCloud:
    """All particles alive at the horizon, recentered at the maximal-norm particle u*
    and rotated so that the direction of u* becomes e1.

    Args:
        tree (BbmTree): Tree with horizon > 0.

    Returns:
        PointCloud: Extremal cluster, u* at the origin.

    Raises:
        DegenerateInputError: If the horizon is 0 or u* sits at the origin.
    """
    if tree.horizon == 0:
        raise DegenerateInputError("Extremal cluster is undefined at horizon 0")
    record = max_norm_particle(tree)
    if not record.direction_defined:
        raise DegenerateInputError("Direction of the maximal particle is undefined")
    return _recentered_cloud(tree, record.particle_id, record.direction)


def front_of_bbm(
    tree: BbmTree,
    epsilon: float,
    slab_width: float,
    s_grid: Iterable[float],
    theta_set: np.ndarray,
    cone_mode: str = ConeModes.SIGNED,
) -> FrontSurface:
    """Front of the BBM: the front of its extremal cluster.

    Args:
        tree (BbmTree): Tree with horizon > 0.
        epsilon (float): Cone parameter in (0, 1).
        slab_width (float): Slab width.
        s_grid (Iterable[float]): Slab positions.
        theta_set (np.ndarray): Directions.
        cone_mode (str, optional): Cone mode. Defaults to signed.

    Returns:
        FrontSurface: Front of the BBM.
    """
    return front_of_point_process(extremal_cluster(tree), epsilon, slab_width, s_grid, theta_set, cone_mode)


def extremal_landscape(tree: BbmTree, ell: float) -> list[LandscapeEntry]:
    """Extremal landscape at depth ell: one entry per ell-clan leader with its
    recentered norm, direction and the whole population seen from it.

    Args:
        tree (BbmTree): Tree.
        ell (float): Clan depth, 0 < ell < horizon.

    Returns:
        list[LandscapeEntry]: Entries sorted by decreasing recentered norm.

    Raises:
        ParameterError: If ell is out of range.
    """
    if not 0 < ell < tree.horizon:
        raise ParameterError(f"Clan depth must lie in (0, {tree.horizon}), got {ell}")
    entries = []
    for record in clan_leaders(tree, ell):
        if not record.direction_defined:
            raise DegenerateInputError(f"Direction of clan leader {record.particle_id} is undefined")
        entries.append(
            LandscapeEntry(
                particle_id=record.particle_id,
                recentered_norm=record.recentered,
                direction=record.direction,
                cluster=_recentered_cloud(tree, record.particle_id, record.direction),
            )
        )
    logger.debug(f"Extremal landscape at depth {ell} has {len(entries)} entries")
    return entries
