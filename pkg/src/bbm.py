"""Event-driven simulation of d-dimensional binary branching Brownian motion with
full genealogy, and extremal / genealogical queries on the resulting tree."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from src.decorators import log_duration
from src.errors import CapacityError, ParameterError, TreeLookupError
from src.logger import Logger
from src.paths import RngStream

logger = Logger(__name__)

SQRT2 = math.sqrt(2.0)
DEFAULT_PARTICLE_CAP = 2_000_000
_BLOCK = 4096


def centering(t: float, dim: int) -> float:
    """Centering m_t(d) = sqrt(2) t + (d - 4) / (2 sqrt(2)) log t of the maximal norm.
    The log term is 0 for t <= 1.

    Args:
        t (float): Time.
        dim (int): Spatial dimension.

    Returns:
        float: Centering.
    """
    if t <= 1:
        return SQRT2 * t
    return SQRT2 * t + (dim - 4) / (2 * SQRT2) * math.log(t)


def gartner_centering(t: float, dim: int) -> float:
    """Radius m_t^G(d) = sqrt(2) t - (d + 2) / (2 sqrt(2)) log t of the F-KPP front.
    The log term is 0 for t <= 1.

    Args:
        t (float): Time.
        dim (int): Spatial dimension.

    Returns:
        float: Front radius.
    """
    if t <= 1:
        return SQRT2 * t
    return SQRT2 * t - (dim + 2) / (2 * SQRT2) * math.log(t)


@dataclass(frozen=True)
class ParticleNode:
    """One particle of the genealogy, between its birth and its branching (or the horizon)."""

    id: int
    parent_id: int | None
    birth_time: float
    final_time: float
    birth_position: np.ndarray
    final_position: np.ndarray


@dataclass(frozen=True)
class ExtremalRecord:
    """Leaf of maximal norm within a group of leaves.

    Args:
        particle_id (int): Leaf id.
        max_norm (float): Euclidean norm of the leaf position.
        recentered (float): max_norm - m_t(d).
        direction (np.ndarray | None): Unit direction, None when the leaf sits at the origin.
    """

    particle_id: int
    max_norm: float
    recentered: float
    direction: np.ndarray | None

    @property
    def direction_defined(self) -> bool:
        return self.direction is not None


class BbmTree:
    """Index-based genealogical tree of one BBM run. Node ids are array indices;
    a parent always has a smaller id than its children. Immutable after construction.

    Args:
        dim (int): Spatial dimension.
        horizon (float): Final time.
        parent (np.ndarray): Parent id per node, -1 for the root.
        birth_time (np.ndarray): Birth time per node.
        final_time (np.ndarray): Branching time, or horizon for leaves.
        birth_position (np.ndarray): Positions at birth, shape (n, dim).
        final_position (np.ndarray): Positions at final_time, shape (n, dim).
        leaf_ids (np.ndarray): Ids of particles alive at the horizon.
        pruned_ids (np.ndarray | None, optional): Ids of particles discarded by pruning.
        prune_delta (float, optional): Pruning tolerance used. Defaults to 0.
        barrier (float | None, optional): First-coordinate floor used for pruning.
    """

    def __init__(
        self,
        dim: int,
        horizon: float,
        parent: np.ndarray,
        birth_time: np.ndarray,
        final_time: np.ndarray,
        birth_position: np.ndarray,
        final_position: np.ndarray,
        leaf_ids: np.ndarray,
        pruned_ids: np.ndarray | None = None,
        prune_delta: float = 0.0,
        barrier: float | None = None,
    ):
        self._dim = dim
        self._horizon = float(horizon)
        self._parent = parent
        self._birth_time = birth_time
        self._final_time = final_time
        self._birth_position = birth_position
        self._final_position = final_position
        self._leaf_ids = leaf_ids
        self._pruned_ids = pruned_ids if pruned_ids is not None else np.zeros(0, dtype=np.int64)
        self._prune_delta = prune_delta
        self._barrier = barrier
        for arr in (parent, birth_time, final_time, birth_position, final_position, leaf_ids):
            arr.flags.writeable = False
        self._children: list[list[int]] | None = None

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def horizon(self) -> float:
        return self._horizon

    @property
    def size(self) -> int:
        """Number of nodes.

        Returns:
            int: Node count.
        """
        return self._parent.size

    @property
    def parent(self) -> np.ndarray:
        return self._parent

    @property
    def birth_time(self) -> np.ndarray:
        return self._birth_time

    @property
    def final_time(self) -> np.ndarray:
        return self._final_time

    @property
    def birth_position(self) -> np.ndarray:
        return self._birth_position

    @property
    def final_position(self) -> np.ndarray:
        return self._final_position

    @property
    def leaf_ids(self) -> np.ndarray:
        return self._leaf_ids

    @property
    def pruned_ids(self) -> np.ndarray:
        return self._pruned_ids

    @property
    def barrier(self) -> float | None:
        return self._barrier

    @property
    def pruning_bias(self) -> float:
        """Markov bound on the probability that a pruned particle would have had a
        descendant at or beyond the barrier at the horizon.

        Returns:
            float: Bias bound, 0 for a complete tree.
        """
        return min(1.0, self._prune_delta * self._pruned_ids.size)

    @property
    def nodes(self) -> list[ParticleNode]:
        return [self.node(i) for i in range(self.size)]

    def node(self, node_id: int) -> ParticleNode:
        """Node view by id.

        Args:
            node_id (int): Node id.

        Returns:
            ParticleNode: Node.

        Raises:
            TreeLookupError: If the id is unknown.
        """
        self._check_id(node_id)
        parent = int(self._parent[node_id])
        return ParticleNode(
            id=int(node_id),
            parent_id=None if parent < 0 else parent,
            birth_time=float(self._birth_time[node_id]),
            final_time=float(self._final_time[node_id]),
            birth_position=self._birth_position[node_id],
            final_position=self._final_position[node_id],
        )

    def children(self, node_id: int) -> list[int]:
        """Ids of the children of a node.

        Args:
            node_id (int): Node id.

        Returns:
            list[int]: Children ids, empty for leaves and pruned nodes.
        """
        self._check_id(node_id)
        if self._children is None:
            children = [[] for _ in range(self.size)]
            for child, parent in enumerate(self._parent):
                if parent >= 0:
                    children[parent].append(child)
            self._children = children
        return list(self._children[node_id])

    def ancestors(self, node_id: int) -> list[int]:
        """Ids from the node up to the root, both included.

        Args:
            node_id (int): Node id.

        Returns:
            list[int]: Ancestral line.
        """
        self._check_id(node_id)
        line = [int(node_id)]
        while self._parent[line[-1]] >= 0:
            line.append(int(self._parent[line[-1]]))
        return line

    def leaf_positions(self) -> np.ndarray:
        """Positions of the particles alive at the horizon, in leaf id order.

        Returns:
            np.ndarray: Array of shape (leaves, dim).
        """
        return self._final_position[self._leaf_ids]

    def max_first_coordinate(self) -> float:
        """Largest first coordinate among leaves, -inf when there are none.

        Returns:
            float: Maximum first coordinate.
        """
        if self._leaf_ids.size == 0:
            return -math.inf
        return float(self.leaf_positions()[:, 0].max())

    def lifetimes(self) -> tuple[np.ndarray, np.ndarray]:
        """Lifetimes of particles which branched (or were pruned) before the horizon,
        with the time each had left when born. A lifetime is observed only when it is
        shorter than that window, so it follows Exp(1) conditioned on the window.

        Returns:
            tuple[np.ndarray, np.ndarray]: Lifetimes and windows.
        """
        branched = self._final_time < self._horizon
        lifetimes = self._final_time[branched] - self._birth_time[branched]
        windows = self._horizon - self._birth_time[branched]
        return lifetimes, windows

    def _check_id(self, node_id: int) -> None:
        if not 0 <= node_id < self.size:
            raise TreeLookupError(f"Unknown particle id {node_id}, tree has {self.size} nodes")

    def __repr__(self) -> str:
        return (
            f"BbmTree(dim={self._dim}, horizon={self._horizon}, nodes={self.size}, "
            f"leaves={self._leaf_ids.size}, pruned={self._pruned_ids.size})"
        )


class _Draws:
    """Block-buffered exponential and normal draws from one generator,
    consumed in a fixed order so a tree is a deterministic function of its stream."""

    def __init__(self, gen: np.random.Generator, dim: int):
        self._gen = gen
        self._dim = dim
        self._exp = np.empty(0)
        self._exp_pos = 0
        self._normal = np.empty((0, dim))
        self._normal_pos = 0

    def exponential(self) -> float:
        if self._exp_pos == self._exp.size:
            self._exp = self._gen.standard_exponential(_BLOCK)
            self._exp_pos = 0
        value = self._exp[self._exp_pos]
        self._exp_pos += 1
        return float(value)

    def normal(self) -> np.ndarray:
        if self._normal_pos == self._normal.shape[0]:
            self._normal = self._gen.standard_normal((_BLOCK, self._dim))
            self._normal_pos = 0
        value = self._normal[self._normal_pos]
        self._normal_pos += 1
        return value


def _log_expected_descendants(time_left: float, gap: float) -> float:
    """Log of e^u P(N(0, u) >= gap), the many-to-one expectation of the number of
    descendants of one particle which end at least `gap` above it after time u.

    Args:
        time_left (float): Remaining time u > 0.
        gap (float): Required displacement.

    Returns:
        float: Log expectation.
    """
    return time_left + float(norm.logsf(gap / math.sqrt(time_left)))


@log_duration
def simulate_bbm(
    dim: int,
    horizon: float,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    barrier: float | None = None,
    prune_delta: float = 1e-6,
) -> BbmTree:
    """Simulate binary BBM with rate-1 exponential lifetimes and independent
    d-dimensional Brownian displacements. Branch events are processed in time order
    from a priority queue, so branch times are exact and a capacity violation is
    reported at the first time it happens.

    With a barrier, a particle reaching a branch event at time r with first coordinate x
    is discarded instead of branching when the expected number of its descendants whose
    first coordinate is at least `barrier` at the horizon is below `prune_delta`.

    Args:
        dim (int): Spatial dimension, at least 1.
        horizon (float): Final time, at least 0.
        rng (RngStream): Random stream.
        particle_cap (int, optional): Maximal number of nodes. Defaults to 2e6.
        barrier (float | None, optional): First-coordinate floor at the horizon. Defaults to None.
        prune_delta (float, optional): Pruning tolerance. Defaults to 1e-6.

    Returns:
        BbmTree: Simulated tree.

    Raises:
        ParameterError: If dim, horizon or particle_cap are out of range.
        CapacityError: If the node count would exceed particle_cap.
    """
    if dim < 1:
        raise ParameterError(f"Dimension must be at least 1, got {dim}")
    if horizon < 0 or not math.isfinite(horizon):
        raise ParameterError(f"Horizon must be finite and non-negative, got {horizon}")
    if particle_cap < 1:
        raise ParameterError(f"Particle cap must be at least 1, got {particle_cap}")
    if barrier is not None and prune_delta <= 0:
        raise ParameterError(f"Pruning tolerance must be positive, got {prune_delta}")

    draws = _Draws(rng.generator(), dim)
    log_delta = math.log(prune_delta) if barrier is not None else 0.0
    parent: list[int] = []
    birth_time: list[float] = []
    final_time: list[float] = []
    birth_position: list[np.ndarray] = []
    final_position: list[np.ndarray] = []
    leaves: list[int] = []
    pruned: list[int] = []
    events: list[tuple[float, int]] = []

    def spawn(parent_id: int, time: float, position: np.ndarray) -> None:
        node_id = len(parent)
        death = time + draws.exponential()
        end = death if death < horizon else horizon
        dt = end - time
        moved = position + math.sqrt(dt) * draws.normal() if dt > 0 else position.copy()
        parent.append(parent_id)
        birth_time.append(time)
        final_time.append(end)
        birth_position.append(position)
        final_position.append(moved)
        if death < horizon:
            heapq.heappush(events, (death, node_id))
        else:
            leaves.append(node_id)

    spawn(-1, 0.0, np.zeros(dim))
    while events:
        time, node_id = heapq.heappop(events)
        position = final_position[node_id]
        if barrier is not None:
            log_expected = _log_expected_descendants(horizon - time, barrier - position[0])
            if log_expected < log_delta:
                pruned.append(node_id)
                continue
        if len(parent) + 2 > particle_cap:
            logger.warning(f"Particle cap {particle_cap} reached at time {time:.6f}")
            raise CapacityError(
                f"Particle count would exceed the cap of {particle_cap} at time {time:.6f}", time
            )
        spawn(node_id, time, position)
        spawn(node_id, time, position)

    tree = BbmTree(
        dim=dim,
        horizon=horizon,
        parent=np.array(parent, dtype=np.int64),
        birth_time=np.array(birth_time, dtype=float),
        final_time=np.array(final_time, dtype=float),
        birth_position=np.array(birth_position, dtype=float).reshape(-1, dim),
        final_position=np.array(final_position, dtype=float).reshape(-1, dim),
        leaf_ids=np.array(sorted(leaves), dtype=np.int64),
        pruned_ids=np.array(sorted(pruned), dtype=np.int64),
        prune_delta=prune_delta if barrier is not None else 0.0,
        barrier=barrier,
    )
    logger.debug(f"Simulated {tree!r}")
    return tree


def _record(tree: BbmTree, leaf_id: int) -> ExtremalRecord:
    position = tree.final_position[leaf_id]
    max_norm = float(np.linalg.norm(position))
    direction = position / max_norm if max_norm > 0 else None
    return ExtremalRecord(
        particle_id=int(leaf_id),
        max_norm=max_norm,
        recentered=max_norm - centering(tree.horizon, tree.dim),
        direction=direction,
    )


def max_norm_particle(tree: BbmTree) -> ExtremalRecord:
    """Leaf of maximal Euclidean norm, ties broken by smallest id.

    Args:
        tree (BbmTree): Tree with at least one leaf.

    Returns:
        ExtremalRecord: Record of u*.
    """
    if tree.leaf_ids.size == 0:
        raise ParameterError("Tree has no leaves")
    norms = np.linalg.norm(tree.leaf_positions(), axis=1)
    # leaf ids are sorted, argmax returns the first maximum
    return _record(tree, int(tree.leaf_ids[int(np.argmax(norms))]))


def _check_leaf(tree: BbmTree, node_id: int) -> None:
    idx = np.searchsorted(tree.leaf_ids, node_id)
    if idx >= tree.leaf_ids.size or tree.leaf_ids[idx] != node_id:
        raise TreeLookupError(f"Particle {node_id} is not alive at the horizon")


def split_time(tree: BbmTree, u: int, v: int) -> float:
    """Death time of the most recent common ancestor of two leaves.

    Args:
        tree (BbmTree): Tree.
        u (int): Leaf id.
        v (int): Leaf id.

    Returns:
        float: Split time u^v, the horizon when u == v.

    Raises:
        TreeLookupError: If an id is not a leaf of the tree.
    """
    _check_leaf(tree, u)
    _check_leaf(tree, v)
    if u == v:
        return tree.horizon
    line = set(tree.ancestors(u))
    node = int(v)
    while node not in line:
        node = int(tree.parent[node])
    return float(tree.final_time[node])


def clan_ancestors(tree: BbmTree, time: float) -> np.ndarray:
    """For every node, the id of its ancestor alive at `time` (itself if alive then),
    -1 for nodes which died at or before `time`.

    Args:
        tree (BbmTree): Tree.
        time (float): Cut time.

    Returns:
        np.ndarray: Ancestor id per node.
    """
    clan = np.full(tree.size, -1, dtype=np.int64)
    birth, final, parent = tree.birth_time, tree.final_time, tree.parent
    for node in range(tree.size):
        if birth[node] <= time < final[node]:
            clan[node] = node
        elif birth[node] > time:
            clan[node] = clan[parent[node]]
    return clan


def clan_leaders(tree: BbmTree, ell: float) -> list[ExtremalRecord]:
    """Maximal-norm leaf of every ell-clan: for each particle alive at time t - ell,
    its descendant leaf of largest norm. Sorted by decreasing norm, ties by id.

    Args:
        tree (BbmTree): Tree.
        ell (float): Clan depth, 0 < ell <= horizon.

    Returns:
        list[ExtremalRecord]: Clan leaders.

    Raises:
        ParameterError: If ell is out of range.
    """
    if not 0 < ell <= tree.horizon:
        raise ParameterError(f"Clan depth must lie in (0, {tree.horizon}], got {ell}")
    clan = clan_ancestors(tree, tree.horizon - ell)
    leaves = tree.leaf_ids
    norms = np.linalg.norm(tree.leaf_positions(), axis=1)
    best: dict[int, int] = {}
    for k, leaf in enumerate(leaves):
        key = int(clan[leaf])
        if key not in best or norms[k] > norms[best[key]]:
            best[key] = k
    records = [_record(tree, int(leaves[k])) for k in best.values()]
    return sorted(records, key=lambda r: (-r.max_norm, r.particle_id))
