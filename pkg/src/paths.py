"""Exact-at-grid sampling of Brownian and Bessel(3) paths and the seeded
random streams every other module draws from."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from src.errors import GridError, ParameterError
from src.logger import Logger

logger = Logger(__name__)


class TimeGrid:
    """Strictly increasing list of times starting at 0.
    Explicit points (instead of start/step/count) allow non-uniform grids.

    Args:
        points (Iterable[float]): Grid times.

    Raises:
        GridError: If the grid is empty, not finite, does not start at 0
            or is not strictly increasing.
    """

    def __init__(self, points: Iterable[float]):
        arr = np.array(points, dtype=float).ravel()
        if arr.size == 0:
            raise GridError("Time grid is empty")
        if not np.all(np.isfinite(arr)):
            raise GridError("Time grid contains non-finite values")
        if arr[0] != 0.0:
            raise GridError(f"Time grid must start at 0, got {arr[0]}")
        if arr.size > 1 and not np.all(np.diff(arr) > 0):
            raise GridError("Time grid must be strictly increasing")
        arr.flags.writeable = False
        self._points = arr

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> TimeGrid:
        """Uniform grid with `steps` intervals on [0, horizon].

        Args:
            horizon (float): Last grid time.
            steps (int): Number of intervals.

        Returns:
            TimeGrid: Uniform grid.
        """
        if horizon == 0:
            return cls([0.0])
        if horizon < 0 or steps < 1:
            raise GridError(f"Invalid uniform grid: horizon={horizon}, steps={steps}")
        return cls(np.linspace(0.0, horizon, steps + 1))

    @classmethod
    def geometric(cls, first: float, last: float, points: int) -> TimeGrid:
        """Grid 0 followed by `points` geometrically spaced times from first to last.

        Args:
            first (float): Smallest positive time.
            last (float): Horizon.
            points (int): Number of positive grid times.

        Returns:
            TimeGrid: Geometric grid.
        """
        if not 0 < first < last or points < 2:
            raise GridError(f"Invalid geometric grid: first={first}, last={last}, points={points}")
        return cls(np.concatenate([[0.0], np.geomspace(first, last, points)]))

    @classmethod
    def union(cls, *grids: TimeGrid | Iterable[float]) -> TimeGrid:
        """Sorted union of several grids or time lists; 0 is always included.

        Returns:
            TimeGrid: Merged grid.
        """
        parts = [np.asarray(g.points if isinstance(g, TimeGrid) else g, dtype=float) for g in grids]
        return cls(np.unique(np.concatenate([[0.0], *parts])))

    @property
    def points(self) -> np.ndarray:
        """Read-only array of grid times.

        Returns:
            np.ndarray: Grid times.
        """
        return self._points

    @property
    def horizon(self) -> float:
        """Last grid time.

        Returns:
            float: Horizon.
        """
        return float(self._points[-1])

    def increments(self) -> np.ndarray:
        """Lengths of the grid intervals.

        Returns:
            np.ndarray: Interval lengths.
        """
        return np.diff(self._points)

    def __len__(self) -> int:
        return self._points.size

    def __repr__(self) -> str:
        return f"TimeGrid(points={len(self)}, horizon={self.horizon})"


class PathGrid:
    """Scalar or vector valued stochastic path sampled on a time grid.
    Scalar paths hold values of shape (n,), vector paths of shape (n, dim).

    Args:
        grid (TimeGrid): Sampling times.
        values (np.ndarray): Values at the grid times.

    Raises:
        GridError: If the number of values does not match the grid.
    """

    def __init__(self, grid: TimeGrid, values: np.ndarray):
        values = np.array(values, dtype=float)
        if values.shape[0] != len(grid):
            raise GridError(f"Path has {values.shape[0]} values for a grid of {len(grid)} points")
        if values.ndim not in (1, 2):
            raise GridError(f"Path values must be 1D or 2D, got shape {values.shape}")
        values.flags.writeable = False
        self._grid = grid
        self._values = values

    @property
    def grid(self) -> TimeGrid:
        return self._grid

    @property
    def times(self) -> np.ndarray:
        return self._grid.points

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        """Spatial dimension, 1 for scalar paths.

        Returns:
            int: Dimension.
        """
        return 1 if self._values.ndim == 1 else self._values.shape[1]

    @property
    def is_scalar(self) -> bool:
        return self._values.ndim == 1

    def component(self, index: int) -> PathGrid:
        """Scalar path of one coordinate of a vector path.

        Args:
            index (int): Coordinate index.

        Returns:
            PathGrid: Scalar path.
        """
        if self.is_scalar:
            return self
        return PathGrid(self._grid, self._values[:, index])

    def columns(self, start: int, stop: int | None = None) -> PathGrid:
        """Vector path of a block of coordinates.

        Args:
            start (int): First coordinate.
            stop (int | None, optional): End coordinate (exclusive). Defaults to all.

        Returns:
            PathGrid: Vector path.
        """
        return PathGrid(self._grid, self._values[:, start:stop])

    def norm(self) -> PathGrid:
        """Pointwise Euclidean norm as a scalar path.

        Returns:
            PathGrid: Scalar path of norms.
        """
        if self.is_scalar:
            return PathGrid(self._grid, np.abs(self._values))
        return PathGrid(self._grid, np.linalg.norm(self._values, axis=1))

    def value_at(self, time: float) -> np.ndarray | float:
        """Value at a grid time.

        Args:
            time (float): Grid time.

        Returns:
            np.ndarray | float: Value.

        Raises:
            GridError: If the time is not a grid point.
        """
        idx = int(np.searchsorted(self.times, time))
        if idx >= len(self._grid) or self.times[idx] != time:
            raise GridError(f"Time {time} is not a grid point")
        return self._values[idx]

    def __repr__(self) -> str:
        return f"PathGrid(dim={self.dim}, grid={self._grid!r})"


@dataclass(frozen=True)
class RngStream:
    """Seeded random stream identified by a root seed and a hierarchical path.
    Identical (root_seed, stream_path) yields bit-identical draws.

    Args:
        root_seed (int): Non-negative 64-bit seed.
        stream_path (tuple[int, ...]): Replica and substream indices.
    """

    root_seed: int
    stream_path: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.root_seed < 0 or self.root_seed >= 2**64:
            raise ParameterError(f"Root seed must be a 64-bit non-negative integer, got {self.root_seed}")
        object.__setattr__(self, "stream_path", tuple(int(i) for i in self.stream_path))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream.
        Philox is counter based, so streams with distinct spawn keys never overlap.

        Returns:
            np.random.Generator: Generator.
        """
        seq = np.random.SeedSequence(entropy=self.root_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> RngStream:
        return derive_stream(self, index)


def derive_stream(rng: RngStream, index: int) -> RngStream:
    """Deterministic child stream: the stream path with `index` appended.

    Args:
        rng (RngStream): Parent stream.
        index (int): Child index.

    Returns:
        RngStream: Child stream.
    """
    if index < 0:
        raise ParameterError(f"Stream index must be non-negative, got {index}")
    return RngStream(rng.root_seed, rng.stream_path + (index,))


def sample_brownian_path(dim: int, grid: TimeGrid, rng: RngStream) -> PathGrid:
    """Standard Brownian motion started at the origin, exact at grid points:
    increments are independent N(0, dt * I).

    Args:
        dim (int): Spatial dimension.
        grid (TimeGrid): Sampling times.
        rng (RngStream): Random stream.

    Returns:
        PathGrid: Vector path of shape (len(grid), dim).
    """
    if dim < 1:
        raise ParameterError(f"Dimension must be at least 1, got {dim}")
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    gen = rng.generator()
    steps = gen.standard_normal((len(grid) - 1, dim)) * np.sqrt(grid.increments())[:, None]
    values = np.vstack([np.zeros((1, dim)), np.cumsum(steps, axis=0)])
    return PathGrid(grid, values)


def sample_bessel3_path(grid: TimeGrid, rng: RngStream) -> PathGrid:
    """Bessel(3) process from 0, realized as the norm of a 3-dimensional Brownian path.

    Args:
        grid (TimeGrid): Sampling times.
        rng (RngStream): Random stream.

    Returns:
        PathGrid: Non-negative scalar path.
    """
    return sample_brownian_path(3, grid, rng).norm()


def bridge_refine(path: PathGrid, times: Iterable[float], rng: RngStream) -> PathGrid:
    """Insert new times into a Brownian path by exact Brownian bridge sampling,
    conditional on the values already on the grid.

    Args:
        path (PathGrid): Brownian path.
        times (Iterable[float]): Times to insert, within [0, horizon].
        rng (RngStream): Random stream.

    Returns:
        PathGrid: Path on the merged grid.

    Raises:
        GridError: If a time lies outside [0, horizon].
    """
    grid_t = path.times
    new = np.setdiff1d(np.unique(np.asarray(list(times), dtype=float)), grid_t)
    if new.size == 0:
        return path
    if new[0] < 0 or new[-1] > path.grid.horizon:
        raise GridError("Bridge refinement times must lie inside the path horizon")

    values = path.values if not path.is_scalar else path.values[:, None]
    right = np.searchsorted(grid_t, new)
    noise = rng.generator().standard_normal((new.size, values.shape[1]))
    inserted = np.empty((new.size, values.shape[1]))
    last_right = -1
    for k, (t, r) in enumerate(zip(new, right)):
        if r == last_right:
            lt, lv = new[k - 1], inserted[k - 1]
        else:
            lt, lv = grid_t[r - 1], values[r - 1]
        rt, rv = grid_t[r], values[r]
        frac = (t - lt) / (rt - lt)
        var = (t - lt) * (rt - t) / (rt - lt)
        inserted[k] = lv + frac * (rv - lv) + np.sqrt(var) * noise[k]
        last_right = r

    all_t = np.concatenate([grid_t, new])
    order = np.argsort(all_t, kind="stable")
    merged = np.vstack([values, inserted])[order]
    if path.is_scalar:
        merged = merged[:, 0]
    return PathGrid(TimeGrid(all_t[order]), merged)


def extend_brownian_path(path: PathGrid, extra_times: Iterable[float], rng: RngStream) -> PathGrid:
    """Continue a Brownian path beyond its horizon with independent increments.

    Args:
        path (PathGrid): Brownian path.
        extra_times (Iterable[float]): Increasing times beyond the horizon.
        rng (RngStream): Random stream.

    Returns:
        PathGrid: Extended path.
    """
    extra = np.asarray(list(extra_times), dtype=float)
    if extra.size == 0:
        return path
    if extra[0] <= path.grid.horizon:
        raise GridError("Extension times must lie beyond the path horizon")
    values = path.values if not path.is_scalar else path.values[:, None]
    dt = np.diff(np.concatenate([[path.grid.horizon], extra]))
    if np.any(dt <= 0):
        raise GridError("Extension times must be strictly increasing")
    steps = rng.generator().standard_normal((extra.size, values.shape[1])) * np.sqrt(dt)[:, None]
    tail = values[-1] + np.cumsum(steps, axis=0)
    merged = np.vstack([values, tail])
    if path.is_scalar:
        merged = merged[:, 0]
    return PathGrid(TimeGrid(np.concatenate([path.times, extra])), merged)


def last_exit_time(path: PathGrid, level: float) -> float:
    """Last grid time at which a scalar path lies in [0, level].

    Args:
        path (PathGrid): Scalar path.
        level (float): Upper end of the interval.

    Returns:
        float: Last exit time, 0 if the path never visits the interval.
    """
    if not path.is_scalar:
        raise ParameterError("Last exit time needs a scalar path")
    inside = np.flatnonzero((path.values >= 0) & (path.values <= level))
    if inside.size == 0:
        return 0.0
    return float(path.times[inside[-1]])
