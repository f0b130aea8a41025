"""Limiting extremal cluster: spine trajectory, branching times along it, BBM clouds
conditioned to stay behind the spine, the X_L functional and the simplified front."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from src.bbm import DEFAULT_PARTICLE_CAP, SQRT2, simulate_bbm
from src.decorators import log_duration
from src.errors import (
    ArtifactError,
    AssemblyError,
    BudgetError,
    ConfigurationError,
    ParameterError,
    TruncationError,
)
from src.front import FrontSurface, PointCloud, _check_theta_set, cone_membership
from src.logger import Logger
from src.paths import (
    PathGrid,
    RngStream,
    TimeGrid,
    bridge_refine,
    last_exit_time,
    sample_bessel3_path,
    sample_brownian_path,
)
from src.rho import legendre_transform, truncation_sigma
from src.utils import ConeModes, IntensityModes, SpineModes, fmt_float

logger = Logger(__name__)

LOG_CORRECTION = 3 / (2 * SQRT2)
DEFAULT_MAX_REJECTS = 10_000


def right_tail_bound(r: float, x: np.ndarray, constant: float = 1.0) -> np.ndarray:
    """Upper bound min(1, C max(z, 1) e^{-sqrt(2) z}) of G_r(x), where z is the distance
    of the threshold sqrt(2) r - x / sqrt(2) above the median position of the maximum.

    Args:
        r (float): Time.
        x (np.ndarray): Shift values.
        constant (float, optional): Constant C. Defaults to 1.

    Returns:
        np.ndarray: Bound per x.
    """
    x = np.asarray(x, dtype=float)
    z = LOG_CORRECTION * math.log(max(r, 1.0)) - x / SQRT2
    return np.minimum(1.0, constant * np.maximum(z, 1.0) * np.exp(-SQRT2 * z))


class GrTable:
    """Tabulated G_r(x) = P(M_r >= sqrt(2) r - x / sqrt(2)) for the maximum M_r of a
    one-dimensional BBM. Rows of r beyond the simulated range hold the right-tail bound.

    Args:
        r_grid (np.ndarray): Increasing r values.
        x_grid (np.ndarray): Increasing x values.
        values (np.ndarray): G values, shape (len(r_grid), len(x_grid)).
        stderr (np.ndarray): Standard errors, NaN for bound rows.
        replicas (int): Replicas per simulated row.
        tail_constant (float, optional): Constant of the right-tail bound. Defaults to 1.
    """

    def __init__(
        self,
        r_grid: np.ndarray,
        x_grid: np.ndarray,
        values: np.ndarray,
        stderr: np.ndarray,
        replicas: int,
        tail_constant: float = 1.0,
    ):
        self._r_grid = np.asarray(r_grid, dtype=float)
        self._x_grid = np.asarray(x_grid, dtype=float)
        self._values = np.asarray(values, dtype=float)
        self._stderr = np.asarray(stderr, dtype=float)
        self._replicas = replicas
        self._tail_constant = tail_constant
        if self._values.shape != (self._r_grid.size, self._x_grid.size):
            raise ParameterError("G table values do not match its grids")

    @property
    def r_grid(self) -> np.ndarray:
        return self._r_grid

    @property
    def x_grid(self) -> np.ndarray:
        return self._x_grid

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def stderr(self) -> np.ndarray:
        return self._stderr

    @property
    def replicas(self) -> int:
        return self._replicas

    @property
    def simulated_until(self) -> float:
        """Largest r whose row was simulated.

        Returns:
            float: r value, 0 if no row was simulated.
        """
        simulated = self._r_grid[~np.isnan(self._stderr).all(axis=1)]
        return float(simulated.max()) if simulated.size else 0.0

    def _row(self, i: int, x: np.ndarray) -> np.ndarray:
        row = np.interp(x, self._x_grid, self._values[i])
        below = x < self._x_grid[0]
        if below.any():
            bound = right_tail_bound(self._r_grid[i], x[below], self._tail_constant)
            row[below] = np.minimum(row[below], bound)
        return row

    def value(self, r: float, x: np.ndarray | float) -> np.ndarray:
        """G_r(x), interpolated linearly in x and r inside the simulated range and
        taken from the right-tail bound beyond it.

        Args:
            r (float): Time.
            x (np.ndarray | float): Shift values.

        Returns:
            np.ndarray: G values in [0, 1].
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if r <= 0:
            return (x >= 0).astype(float)
        if r > self.simulated_until:
            return right_tail_bound(r, x, self._tail_constant)
        j = int(np.searchsorted(self._r_grid, r))
        if j == 0:
            return np.clip(self._row(0, x), 0.0, 1.0)
        r0, r1 = self._r_grid[j - 1], self._r_grid[j]
        w = (r - r0) / (r1 - r0)
        return np.clip((1 - w) * self._row(j - 1, x) + w * self._row(j, x), 0.0, 1.0)

    def to_csv(self, path: str) -> None:
        """Persists the table as CSV with columns r,x,value,stderr.

        Args:
            path (str): Output path.
        """
        try:
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["r", "x", "value", "stderr"])
                for i, r in enumerate(self._r_grid):
                    for j, x in enumerate(self._x_grid):
                        writer.writerow(
                            [fmt_float(r), fmt_float(x), fmt_float(self._values[i, j]), fmt_float(self._stderr[i, j])]
                        )
        except OSError as e:
            raise ArtifactError(f"Failed to write G table to {path}: {e}")
        logger.info(f"G table saved to {path}")

    @classmethod
    def from_csv(cls, path: str, replicas: int = 0, tail_constant: float = 1.0) -> GrTable:
        """Loads a table persisted by to_csv.

        Args:
            path (str): CSV path.
            replicas (int, optional): Replica count to record. Defaults to 0.
            tail_constant (float, optional): Constant of the right-tail bound. Defaults to 1.

        Returns:
            GrTable: Loaded table.
        """
        try:
            with open(path, newline="", encoding="utf-8") as f:
                rows = [(float(r["r"]), float(r["x"]), float(r["value"]), float(r["stderr"])) for r in csv.DictReader(f)]
        except (OSError, KeyError, ValueError) as e:
            raise ArtifactError(f"Failed to read G table from {path}: {e}")
        r_grid = np.unique([row[0] for row in rows])
        x_grid = np.unique([row[1] for row in rows])
        values = np.full((r_grid.size, x_grid.size), np.nan)
        stderr = np.full_like(values, np.nan)
        for r, x, value, err in rows:
            i, j = np.searchsorted(r_grid, r), np.searchsorted(x_grid, x)
            values[i, j], stderr[i, j] = value, err
        logger.info(f"G table loaded from {path}: {r_grid.size} x {x_grid.size}")
        return cls(r_grid, x_grid, values, stderr, replicas, tail_constant)


@log_duration
def build_gr_table(
    r_grid: Sequence[float],
    x_grid: Sequence[float],
    replicas: int,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    feasible_r: float = 10.0,
    tail_constant: float = 1.0,
) -> GrTable:
    """Monte Carlo table of G_r(x). Rows with r <= feasible_r are estimated from
    `replicas` one-dimensional BBMs each, then made non-decreasing in x; other rows
    use the right-tail bound.

    Args:
        r_grid (Sequence[float]): Increasing positive r values.
        x_grid (Sequence[float]): Increasing x values.
        replicas (int): Replicas per row, at least 100.
        rng (RngStream): Random stream.
        particle_cap (int, optional): Cap per BBM. Defaults to 2e6.
        feasible_r (float, optional): Largest simulated r. Defaults to 10.
        tail_constant (float, optional): Constant of the right-tail bound. Defaults to 1.

    Returns:
        GrTable: Table.
    """
    if replicas < 100:
        raise ParameterError(f"G table needs at least 100 replicas, got {replicas}")
    r_values = np.asarray(r_grid, dtype=float)
    x_values = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(r_values) <= 0) or np.any(np.diff(x_values) <= 0) or np.any(r_values <= 0):
        raise ParameterError("G table grids must be increasing and r must be positive")
    values = np.empty((r_values.size, x_values.size))
    stderr = np.full_like(values, np.nan)
    for i, r in enumerate(r_values):
        if r > feasible_r:
            values[i] = right_tail_bound(r, x_values, tail_constant)
            continue
        row_rng = rng.child(i)
        maxima = np.array(
            [simulate_bbm(1, r, row_rng.child(k), particle_cap).max_first_coordinate() for k in range(replicas)]
        )
        thresholds = SQRT2 * r - x_values / SQRT2
        p = (maxima[None, :] >= thresholds[:, None]).mean(axis=1)
        values[i] = np.maximum.accumulate(p)
        stderr[i] = np.sqrt(values[i] * (1 - values[i]) / replicas)
        logger.debug(f"G table row r={r} estimated from {replicas} replicas")
    return GrTable(r_values, x_values, values, stderr, replicas, tail_constant)


class SpinePath:
    """Discretized spine trajectory (A_s, Y_s) with A_hat_s = -A_s - sqrt(2) s.

    Args:
        grid (TimeGrid): Sampling times.
        A (np.ndarray): First coordinate of the spine.
        Y (np.ndarray): Transversal coordinates, shape (n, d - 1).
        A_hat (np.ndarray): Recentered first coordinate.
        mode (str): Approximate or tilted.
        b (float | None, optional): Maximum of A_s + sqrt(2) s (tilted mode).
        weight (float, optional): Importance weight. Defaults to 1.
        tilt (float, optional): Exponential tilt factor. Defaults to 1.
        tail_bias (float, optional): Bound of the truncated tilt integral. Defaults to 0.
        brownian (PathGrid | None, optional): 3D Brownian path whose norm is A_hat (approximate mode).
        transversal (PathGrid | None, optional): Brownian path of Y.
    """

    def __init__(
        self,
        grid: TimeGrid,
        A: np.ndarray,
        Y: np.ndarray,
        A_hat: np.ndarray,
        mode: str,
        b: float | None = None,
        weight: float = 1.0,
        tilt: float = 1.0,
        tail_bias: float = 0.0,
        brownian: PathGrid | None = None,
        transversal: PathGrid | None = None,
    ):
        self.grid = grid
        self.A = A
        self.Y = Y
        self.A_hat = A_hat
        self.mode = mode
        self.b = b
        self.weight = weight
        self.tilt = tilt
        self.tail_bias = tail_bias
        self._brownian = brownian
        self._transversal = transversal

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @property
    def dim(self) -> int:
        return self.Y.shape[1] + 1

    def a_hat_path(self) -> PathGrid:
        return PathGrid(self.grid, self.A_hat)

    def hat_at(self, times: np.ndarray) -> np.ndarray:
        """A_hat at arbitrary times by linear interpolation.

        Args:
            times (np.ndarray): Times within the horizon.

        Returns:
            np.ndarray: Interpolated values.
        """
        return np.interp(times, self.grid.points, self.A_hat)

    def at(self, times: np.ndarray, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
        """Spine position at arbitrary times. Approximate spines are refined by exact
        Brownian bridges, tilted spines are interpolated linearly.

        Args:
            times (np.ndarray): Times within the horizon.
            rng (RngStream): Random stream for the bridges.

        Returns:
            tuple[np.ndarray, np.ndarray]: A values and Y values (shape (k, d - 1)).
        """
        times = np.asarray(times, dtype=float)
        if times.size == 0:
            return np.zeros(0), np.zeros((0, self.dim - 1))
        if np.any(times < 0) or np.any(times > self.horizon):
            raise ParameterError("Spine times must lie inside the spine horizon")
        if self.mode == SpineModes.APPROXIMATE and self._brownian is not None:
            refined = bridge_refine(self._brownian, times, rng.child(0))
            idx = np.searchsorted(refined.times, times)
            bessel = np.linalg.norm(refined.values[idx], axis=1)
            a_values = -SQRT2 * times - bessel
            if self.dim > 1:
                transversal = bridge_refine(self._transversal, times, rng.child(1))
                y_values = transversal.values[np.searchsorted(transversal.times, times)]
            else:
                y_values = np.zeros((times.size, 0))
            return a_values, y_values
        a_values = np.interp(times, self.grid.points, self.A)
        y_values = np.column_stack([np.interp(times, self.grid.points, col) for col in self.Y.T]) if self.dim > 1 else np.zeros((times.size, 0))
        return a_values, y_values.reshape(times.size, self.dim - 1)

    def __repr__(self) -> str:
        return f"SpinePath(mode={self.mode}, dim={self.dim}, horizon={self.horizon}, weight={self.weight:.4g})"


@dataclass(frozen=True)
class BranchingTimes:
    """Branching times along the spine.

    Args:
        times (np.ndarray): Increasing times.
        intensity_mode (str): rate2 or tilted.
        proposed (int): Number of rate-2 candidates before thinning.
    """

    times: np.ndarray
    intensity_mode: str
    proposed: int = 0

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class CloudSample:
    """BBM point cloud born from the spine at one branching time.

    Args:
        branch_time (float): Branching time tau_i, also the cloud duration.
        origin (np.ndarray): Spine position (A_tau, Y_tau) the cloud starts from.
        cloud (PointCloud): Terminal positions in absolute coordinates.
        accepted_after (int): Number of rejections before acceptance.
        pruning_bias (float): Markov bound of the pruning error.
    """

    branch_time: float
    origin: np.ndarray
    cloud: PointCloud
    accepted_after: int = 0
    pruning_bias: float = field(default=0.0)


def _tilt_integral(grid: TimeGrid, gamma: np.ndarray, horizon: float, gr: GrTable) -> float:
    times = grid.points
    inside = times <= horizon
    g_values = np.array([gr.value(r, SQRT2 * x)[0] for r, x in zip(times[inside], gamma[inside])])
    return float(integrate.trapezoid(g_values, times[inside])) if g_values.size > 1 else 0.0


def _tilt_tail(horizon: float, gamma_end: float, gr: GrTable) -> float:
    """Bound of 2 times the tilt integral beyond the horizon, with Gamma frozen at its last value."""
    if horizon <= 0:
        return math.inf

    def bound(r: float) -> float:
        return float(right_tail_bound(r, np.array([SQRT2 * gamma_end]), gr._tail_constant)[0])

    value, _ = integrate.quad(bound, horizon, np.inf, limit=200)
    return 2 * value


def _sample_gamma(grid: TimeGrid, b: float, rng: RngStream) -> np.ndarray:
    """Brownian motion until its first grid crossing of b, then b minus a Bessel(3) path."""
    brownian = sample_brownian_path(1, grid, rng.child(0)).values[:, 0]
    hits = np.flatnonzero(brownian >= b)
    if hits.size == 0:
        return brownian
    hit = hits[0]
    shifted = TimeGrid(grid.points[hit:] - grid.points[hit])
    bessel = sample_bessel3_path(shifted, rng.child(1)).values
    gamma = brownian.copy()
    gamma[hit:] = b - bessel
    return gamma


def sample_spine(
    mode: str,
    horizon: float,
    grid: TimeGrid,
    dim: int,
    rng: RngStream,
    gr: GrTable | None = None,
    b_scale: float = 2.0,
    candidates: int = 1,
) -> SpinePath:
    """Sample the spine trajectory.

    Approximate mode: A_s = -sqrt(2) s - R_s with R a Bessel(3) path, so A_hat = R.
    Tilted mode: b is drawn from Exponential(b_scale), Gamma^(b) is Brownian motion until it
    reaches b and b minus a Bessel(3) path afterwards, A_s = Gamma_s - sqrt(2) s, and the
    path carries the tilt exp(-2 int_0^horizon G_r(sqrt(2) Gamma_r) dr) divided by the
    proposal density of b. With several candidates one is resampled proportionally to its
    weight and the mean weight is emitted.

    Args:
        mode (str): approximate or tilted.
        horizon (float): Truncation horizon of the tilt integral.
        grid (TimeGrid): Sampling grid, covering the horizon.
        dim (int): Spatial dimension.
        rng (RngStream): Random stream.
        gr (GrTable | None, optional): G table, required in tilted mode.
        b_scale (float, optional): Mean of the proposal of b. Defaults to 2.
        candidates (int, optional): Number of proposals. Defaults to 1.

    Returns:
        SpinePath: Spine.

    Raises:
        ConfigurationError: If tilted mode lacks a G table or the mode is unknown.
    """
    if dim < 1:
        raise ParameterError(f"Dimension must be at least 1, got {dim}")
    if horizon > grid.horizon:
        raise ParameterError(f"Spine grid ends at {grid.horizon}, before the horizon {horizon}")
    times = grid.points
    transversal = sample_brownian_path(max(dim - 1, 1), grid, rng.child(1))
    y_values = transversal.values if dim > 1 else np.zeros((len(grid), 0))

    if mode == SpineModes.APPROXIMATE:
        brownian = sample_brownian_path(3, grid, rng.child(0))
        bessel = brownian.norm().values
        return SpinePath(
            grid=grid,
            A=-SQRT2 * times - bessel,
            Y=y_values,
            A_hat=bessel,
            mode=mode,
            brownian=brownian,
            transversal=transversal if dim > 1 else None,
        )
    if mode != SpineModes.TILTED:
        raise ConfigurationError(f"Unknown spine mode {mode}")
    if gr is None:
        raise ConfigurationError("Tilted spine mode requires a G table")
    if candidates < 1:
        raise ParameterError(f"candidates must be at least 1, got {candidates}")

    proposals = []
    for k in range(candidates):
        stream = rng.child(2 + k)
        b = float(stream.generator().exponential(b_scale))
        gamma = _sample_gamma(grid, b, stream.child(0))
        tilt = math.exp(-2 * _tilt_integral(grid, gamma, horizon, gr))
        density = math.exp(-b / b_scale) / b_scale
        proposals.append((b, gamma, tilt, tilt / density))
    weights = np.array([p[3] for p in proposals])
    if candidates == 1:
        chosen, weight = 0, float(weights[0])
    else:
        pick = rng.child(2 + candidates).generator()
        chosen = int(pick.choice(candidates, p=weights / weights.sum()))
        weight = float(weights.mean())
    b, gamma, tilt, _ = proposals[chosen]
    tail = _tilt_tail(horizon, float(gamma[np.searchsorted(times, horizon, side="right") - 1]), gr)
    tail_bias = 1.0 - math.exp(-tail)
    if tail_bias > 1e-2:
        logger.warning(f"Tilt truncation at horizon {horizon} leaves a relative bias up to {tail_bias:.3g}")
    return SpinePath(
        grid=grid,
        A=gamma - SQRT2 * times,
        Y=y_values,
        A_hat=-gamma,
        mode=mode,
        b=b,
        weight=weight,
        tilt=tilt,
        tail_bias=tail_bias,
        transversal=transversal if dim > 1 else None,
    )


def sample_branching_times(
    spine: SpinePath,
    horizon: float,
    rng: RngStream,
    intensity_mode: str = IntensityModes.RATE2,
    gr: GrTable | None = None,
) -> BranchingTimes:
    """Poisson branching times along the spine on [0, horizon].
    Both modes draw the same rate-2 candidates and uniforms from the stream; tilted mode
    keeps a candidate t with probability P(M_t < -A_t) = 1 - G_t(-sqrt(2) A_hat_t),
    so tilted times are always a subset of the rate-2 times of the same stream.

    Args:
        spine (SpinePath): Spine.
        horizon (float): Horizon, at most the spine horizon.
        rng (RngStream): Random stream.
        intensity_mode (str, optional): rate2 or tilted. Defaults to rate2.
        gr (GrTable | None, optional): G table, required in tilted mode.

    Returns:
        BranchingTimes: Branching times.
    """
    if horizon < 0 or horizon > spine.horizon:
        raise ParameterError(f"Horizon must lie in [0, {spine.horizon}], got {horizon}")
    if intensity_mode not in (IntensityModes.RATE2, IntensityModes.TILTED):
        raise ConfigurationError(f"Unknown intensity mode {intensity_mode}")
    if intensity_mode == IntensityModes.TILTED and gr is None:
        raise ConfigurationError("Tilted intensity mode requires a G table")
    gen = rng.generator()
    count = int(gen.poisson(2.0 * horizon))
    candidates = np.sort(gen.uniform(0.0, horizon, count))
    uniforms = gen.uniform(0.0, 1.0, count)
    if intensity_mode == IntensityModes.RATE2:
        return BranchingTimes(candidates, intensity_mode, count)
    hats = spine.hat_at(candidates)
    accept = np.array([1.0 - gr.value(t, -SQRT2 * a)[0] for t, a in zip(candidates, hats)])
    return BranchingTimes(candidates[uniforms <= accept], intensity_mode, count)


def sample_cloud(
    tau: float,
    origin: np.ndarray,
    dim: int,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    floor: float | None = None,
    prune_delta: float = 1e-6,
) -> CloudSample:
    """Unconditioned BBM cloud of duration tau started from the spine position `origin`.
    With a floor, particles unlikely to end with first coordinate above it are pruned.

    Args:
        tau (float): Duration.
        origin (np.ndarray): (A_tau, Y_tau).
        dim (int): Spatial dimension.
        rng (RngStream): Random stream.
        particle_cap (int, optional): Node cap. Defaults to 2e6.
        floor (float | None, optional): Absolute first-coordinate floor. Defaults to None.
        prune_delta (float, optional): Pruning tolerance. Defaults to 1e-6.

    Returns:
        CloudSample: Cloud in absolute coordinates.
    """
    origin = np.asarray(origin, dtype=float)
    barrier = None if floor is None else floor - origin[0]
    tree = simulate_bbm(dim, tau, rng, particle_cap, barrier=barrier, prune_delta=prune_delta)
    coords = tree.leaf_positions() + origin
    cloud = PointCloud(coords, tags=["cloud"] * len(coords), times=np.full(len(coords), tau), dim=dim)
    return CloudSample(tau, origin, cloud, 0, tree.pruning_bias)


def sample_conditioned_cloud(
    tau: float,
    A_tau: float,
    Y_tau: np.ndarray,
    dim: int,
    rng: RngStream,
    max_rejects: int = DEFAULT_MAX_REJECTS,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    floor: float | None = None,
    prune_delta: float = 1e-6,
) -> CloudSample:
    """BBM cloud of duration tau started at (A_tau, Y_tau), conditioned on all its particles
    ending with negative first coordinate, by rejection sampling.
    A floor (at most 0) enables pruning; particles ending below the floor may be missing.

    Args:
        tau (float): Duration, at least 0.
        A_tau (float): First coordinate of the spine at tau.
        Y_tau (np.ndarray): Transversal coordinates of the spine at tau.
        dim (int): Spatial dimension.
        rng (RngStream): Random stream.
        max_rejects (int, optional): Rejection budget. Defaults to 1e4.
        particle_cap (int, optional): Node cap. Defaults to 2e6.
        floor (float | None, optional): Absolute first-coordinate floor. Defaults to None.
        prune_delta (float, optional): Pruning tolerance. Defaults to 1e-6.

    Returns:
        CloudSample: Accepted cloud.

    Raises:
        BudgetError: If no cloud is accepted within the budget.
    """
    if tau < 0:
        raise ParameterError(f"tau must be non-negative, got {tau}")
    if max_rejects < 1:
        raise ParameterError(f"max_rejects must be at least 1, got {max_rejects}")
    if floor is not None and floor > 0:
        raise ParameterError(f"Floor must be at most 0 to decide the conditioning, got {floor}")
    origin = np.concatenate([[A_tau], np.asarray(Y_tau, dtype=float).ravel()])
    if origin.size != dim:
        raise ParameterError(f"Spine position has length {origin.size}, expected {dim}")
    attempts = rejected = 0
    while attempts < max_rejects:
        sample = sample_cloud(tau, origin, dim, rng.child(attempts), particle_cap, floor, prune_delta)
        attempts += 1
        if _behind_spine(sample):
            return CloudSample(tau, origin, sample.cloud, attempts - 1, sample.pruning_bias)
        rejected += 1
        # a cloud of duration 0 is its start point, every attempt is the same
        if tau == 0:
            break
    raise BudgetError(
        f"No conditioned cloud accepted after {attempts} attempts at tau={tau}", (attempts - rejected) / attempts
    )


def _behind_spine(sample: CloudSample) -> bool:
    coords = sample.cloud.coords
    return bool(coords.shape[0] == 0 or coords[:, 0].max() < 0)


def conditioning_event(
    tau: float,
    A_tau: float,
    dim: int,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    prune_delta: float = 1e-6,
) -> bool:
    """Whether one unconditioned cloud born at first coordinate A_tau ends with every
    particle at negative first coordinate; pruned against the level 0 itself.

    Args:
        tau (float): Duration.
        A_tau (float): Spine first coordinate.
        dim (int): Spatial dimension.
        rng (RngStream): Random stream.
        particle_cap (int, optional): Node cap. Defaults to 2e6.
        prune_delta (float, optional): Pruning tolerance. Defaults to 1e-6.

    Returns:
        bool: True if the conditioning event holds.
    """
    origin = np.zeros(dim)
    origin[0] = A_tau
    return _behind_spine(sample_cloud(tau, origin, dim, rng, particle_cap, 0.0, prune_delta))


def conditioning_acceptance(
    tau: float,
    A_tau: float,
    dim: int,
    attempts: int,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    prune_delta: float = 1e-6,
) -> float:
    """Fraction of `attempts` independent clouds satisfying the conditioning event.

    Returns:
        float: Acceptance rate.
    """
    if attempts < 1:
        raise ParameterError(f"attempts must be at least 1, got {attempts}")
    accepted = sum(conditioning_event(tau, A_tau, dim, rng.child(k), particle_cap, prune_delta) for k in range(attempts))
    return accepted / attempts


def assemble_cluster(spine: SpinePath, times: BranchingTimes, clouds: Sequence[CloudSample]) -> PointCloud:
    """Limiting cluster: the origin plus every cloud point, tagged by source.

    Args:
        spine (SpinePath): Spine.
        times (BranchingTimes): Branching times.
        clouds (Sequence[CloudSample]): One cloud per branching time, in order.

    Returns:
        PointCloud: Cluster with tags "origin" and "cloud_<i>" (i from 1).

    Raises:
        AssemblyError: If clouds and times are not aligned.
    """
    if len(clouds) != len(times):
        raise AssemblyError(f"{len(clouds)} clouds for {len(times)} branching times")
    dim = spine.dim
    coords = [np.zeros((1, dim))]
    tags = ["origin"]
    point_times = [np.array([np.nan])]
    for i, (tau, sample) in enumerate(zip(times.times, clouds), start=1):
        if not math.isclose(sample.branch_time, tau, rel_tol=0, abs_tol=1e-12):
            raise AssemblyError(f"Cloud {i} was born at {sample.branch_time}, expected {tau}")
        if sample.cloud.dim != dim:
            raise AssemblyError(f"Cloud {i} has dimension {sample.cloud.dim}, expected {dim}")
        coords.append(sample.cloud.coords)
        tags.extend([f"cloud_{i}"] * len(sample.cloud))
        point_times.append(np.full(len(sample.cloud), tau))
    return PointCloud(np.vstack(coords), tags=tags, times=np.concatenate(point_times), dim=dim)


def compute_XL(spine: SpinePath, L: float, s_grid: Sequence[float], sigma_max: float | None = None) -> np.ndarray:
    """X_L(s) = (sup_sigma sigma (s - A_hat_{sigma L^2} / L))^{1/2} over the sigma grid
    induced by the spine grid.

    Args:
        spine (SpinePath): Spine.
        L (float): Scale.
        s_grid (Sequence[float]): Non-negative s values.
        sigma_max (float | None, optional): sigma truncation. Defaults to the truncation rule
            with tail 1e-3 at max(s_grid).

    Returns:
        np.ndarray: X_L per s.

    Raises:
        TruncationError: If the spine is shorter than sigma_max L^2.
    """
    if L <= 0:
        raise ParameterError(f"L must be positive, got {L}")
    s_values = np.asarray(list(s_grid), dtype=float)
    if sigma_max is None:
        sigma_max = truncation_sigma(max(float(s_values.max()), 1e-12), 1e-3)
    required = sigma_max * L**2
    if spine.horizon < required:
        raise TruncationError(f"Spine horizon {spine.horizon} is shorter than required {required}", required)
    sigma = spine.grid.points / L**2
    sups, _ = legendre_transform(sigma, spine.A_hat / L, s_values)
    return np.sqrt(sups)


def simplified_front(
    spine: SpinePath,
    times: BranchingTimes,
    clouds: Sequence[CloudSample | None],
    L: float,
    epsilon: float,
    s_grid: Sequence[float],
    theta_set: np.ndarray,
    T: float | None = None,
    slab_width: float = 1.0,
    cone_mode: str = ConeModes.SIGNED,
) -> FrontSurface:
    """Simplified front: L^{-3/2} times the maximum over clouds born in
    [L^1.4, last exit of [0, T L] by A_hat] of the transversal displacement (relative to the
    spine) of particles with first coordinate in (-s L, -s L + slab_width] whose absolute
    transversal direction lies in the cone around theta.

    Args:
        spine (SpinePath): Spine.
        times (BranchingTimes): Branching times.
        clouds (Sequence[CloudSample | None]): Cloud per branching time; None allowed outside the window.
        L (float): Scale.
        epsilon (float): Cone parameter in (0, 1).
        s_grid (Sequence[float]): s values.
        theta_set (np.ndarray): Directions.
        T (float | None, optional): s horizon of the last exit. Defaults to max(s_grid).
        slab_width (float, optional): Slab width. Defaults to 1.
        cone_mode (str, optional): Cone mode. Defaults to signed.

    Returns:
        FrontSurface: Simplified front.
    """
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if len(clouds) != len(times):
        raise AssemblyError(f"{len(clouds)} clouds for {len(times)} branching times")
    s_values = np.asarray(list(s_grid), dtype=float)
    theta_set = _check_theta_set(theta_set, spine.dim)
    T = float(s_values.max()) if T is None else T
    start, end = window_bounds(spine, L, T)

    heights = np.zeros((s_values.size, theta_set.shape[0]))
    for tau, sample in zip(times.times, clouds):
        if not start <= tau <= end:
            continue
        if sample is None:
            raise AssemblyError(f"Missing cloud for branching time {tau} inside the window")
        coords = sample.cloud.coords
        if coords.shape[0] == 0:
            continue
        first = coords[:, 0]
        transversal = coords[:, 1:]
        radius = np.linalg.norm(transversal - sample.origin[1:], axis=1)
        contribution = np.where(cone_membership(transversal, theta_set, epsilon, cone_mode), radius[:, None], 0.0)
        for i, s in enumerate(s_values):
            slab = (first > -s * L) & (first <= -s * L + slab_width)
            if slab.any():
                heights[i] = np.maximum(heights[i], contribution[slab].max(axis=0))
    return FrontSurface(
        s_grid=s_values,
        theta_set=theta_set,
        heights=heights * L ** (-1.5),
        epsilon=epsilon,
        slab_width=slab_width,
        cone_mode=cone_mode,
    )


def window_bounds(spine: SpinePath, L: float, T: float) -> tuple[float, float]:
    """Birth-time window [L^1.4, last exit of [0, T L] by A_hat] of contributing clouds.

    Args:
        spine (SpinePath): Spine.
        L (float): Scale.
        T (float): s horizon.

    Returns:
        tuple[float, float]: Window start and end.
    """
    return L**1.4, last_exit_time(spine.a_hat_path(), T * L)


def spine_grid(L: float, s_max: float, points: int = 4096, step: float = 0.25, tail: float = 1e-3) -> TimeGrid:
    """Spine grid: uniform with `step` up to a few L^2, geometric up to the sigma
    truncation sigma_max L^2.

    Args:
        L (float): Scale.
        s_max (float): Largest s.
        points (int, optional): Geometric points. Defaults to 4096.
        step (float, optional): Uniform step. Defaults to 0.25.
        tail (float, optional): Truncation tail. Defaults to 1e-3.

    Returns:
        TimeGrid: Grid.
    """
    if L <= 0 or s_max <= 0:
        raise ParameterError(f"Spine grid needs positive L and s_max, got {L} and {s_max}")
    horizon = truncation_sigma(s_max, tail) * L**2
    near = min(16 * (s_max * L) ** 2, horizon)
    uniform = TimeGrid.uniform(near, max(int(math.ceil(near / step)), 1))
    far = TimeGrid.geometric(min(step, near), horizon, points)
    return TimeGrid.union(uniform, far)


@dataclass(frozen=True)
class LimitClusterSample:
    """One sample of the limiting cluster: spine, branching times, clouds and,
    when every cloud was sampled, the assembled cluster.

    Args:
        spine (SpinePath): Spine.
        times (BranchingTimes): Branching times.
        clouds (list[CloudSample | None]): Cloud per branching time, None where skipped.
        cluster (PointCloud | None): Assembled cluster.
        window (tuple[float, float]): Birth-time window of the sampled clouds.
    """

    spine: SpinePath
    times: BranchingTimes
    clouds: list[CloudSample | None]
    cluster: PointCloud | None
    window: tuple[float, float]

    @property
    def pruning_bias(self) -> float:
        return sum(c.pruning_bias for c in self.clouds if c is not None)


def _sample_clouds(
    spine: SpinePath,
    times: BranchingTimes,
    window: tuple[float, float],
    rng: RngStream,
    conditioned: bool,
    particle_cap: int,
    max_rejects: int,
    floor: float | None,
    prune_delta: float,
) -> list[CloudSample | None]:
    start, end = window
    in_window = (times.times >= start) & (times.times <= end)
    a_values, y_values = spine.at(times.times[in_window], rng.child(0))
    clouds: list[CloudSample | None] = [None] * len(times)
    cloud_rng = rng.child(1)
    for k, i in enumerate(np.flatnonzero(in_window)):
        tau = float(times.times[i])
        stream = cloud_rng.child(int(i))
        if conditioned:
            clouds[i] = sample_conditioned_cloud(
                tau, a_values[k], y_values[k], spine.dim, stream, max_rejects, particle_cap, floor, prune_delta
            )
        else:
            origin = np.concatenate([[a_values[k]], y_values[k]])
            clouds[i] = sample_cloud(tau, origin, spine.dim, stream, particle_cap, floor, prune_delta)
    return clouds


@log_duration
def simulate_limit_cluster(
    dim: int,
    horizon: float,
    rng: RngStream,
    spine_mode: str = SpineModes.APPROXIMATE,
    intensity_mode: str = IntensityModes.RATE2,
    gr: GrTable | None = None,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    max_rejects: int = DEFAULT_MAX_REJECTS,
    floor: float | None = None,
    prune_delta: float = 1e-6,
    b_scale: float = 2.0,
    candidates: int = 1,
    step: float = 0.05,
) -> LimitClusterSample:
    """Limiting cluster truncated at `horizon`: spine on a uniform grid, branching times
    on [0, horizon], one conditioned cloud per branching time, assembly.

    Args:
        dim (int): Spatial dimension.
        horizon (float): Truncation horizon of the spine.
        rng (RngStream): Random stream.
        spine_mode (str, optional): Spine mode. Defaults to approximate.
        intensity_mode (str, optional): Intensity mode. Defaults to rate2.
        gr (GrTable | None, optional): G table for tilted modes.
        particle_cap (int, optional): Node cap per cloud. Defaults to 2e6.
        max_rejects (int, optional): Rejection budget per cloud. Defaults to 1e4.
        floor (float | None, optional): Absolute first-coordinate floor enabling pruning.
        prune_delta (float, optional): Pruning tolerance. Defaults to 1e-6.
        b_scale (float, optional): Proposal mean of b. Defaults to 2.
        candidates (int, optional): Spine proposals. Defaults to 1.
        step (float, optional): Spine grid step. Defaults to 0.05.

    Returns:
        LimitClusterSample: Sample with the assembled cluster.
    """
    if horizon < 0:
        raise ParameterError(f"Horizon must be non-negative, got {horizon}")
    grid = TimeGrid.uniform(horizon, max(int(math.ceil(horizon / step)), 1))
    spine = sample_spine(spine_mode, horizon, grid, dim, rng.child(0), gr, b_scale, candidates)
    times = sample_branching_times(spine, horizon, rng.child(1), intensity_mode, gr)
    clouds = _sample_clouds(
        spine, times, (0.0, horizon), rng.child(2), True, particle_cap, max_rejects, floor, prune_delta
    )
    cluster = assemble_cluster(spine, times, clouds)
    logger.debug(f"Limit cluster with {len(times)} branching times and {len(cluster)} points")
    return LimitClusterSample(spine, times, clouds, cluster, (0.0, horizon))


@log_duration
def sample_front_inputs(
    dim: int,
    L: float,
    s_max: float,
    rng: RngStream,
    spine_mode: str = SpineModes.APPROXIMATE,
    intensity_mode: str = IntensityModes.RATE2,
    gr: GrTable | None = None,
    conditioned: bool = False,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
    max_rejects: int = DEFAULT_MAX_REJECTS,
    prune_delta: float = 1e-6,
    b_scale: float = 2.0,
    candidates: int = 1,
) -> LimitClusterSample:
    """Spine, branching times and clouds for the simplified front at scale L.
    The spine reaches the sigma truncation of X_L; clouds are only sampled for branching
    times inside the window and are pruned below the first coordinate -s_max L, which no
    slab with s <= s_max reaches.

    Args:
        dim (int): Spatial dimension.
        L (float): Scale.
        s_max (float): Largest s.
        rng (RngStream): Random stream.
        spine_mode (str, optional): Spine mode. Defaults to approximate.
        intensity_mode (str, optional): Intensity mode. Defaults to rate2.
        gr (GrTable | None, optional): G table for tilted modes.
        conditioned (bool, optional): Condition the clouds. Defaults to False.
        particle_cap (int, optional): Node cap per cloud. Defaults to 2e6.
        max_rejects (int, optional): Rejection budget per cloud. Defaults to 1e4.
        prune_delta (float, optional): Pruning tolerance. Defaults to 1e-6.
        b_scale (float, optional): Proposal mean of b. Defaults to 2.
        candidates (int, optional): Spine proposals. Defaults to 1.

    Returns:
        LimitClusterSample: Sample without an assembled cluster.
    """
    grid = spine_grid(L, s_max)
    spine = sample_spine(spine_mode, grid.horizon, grid, dim, rng.child(0), gr, b_scale, candidates)
    window = window_bounds(spine, L, s_max)
    times = sample_branching_times(spine, window[1], rng.child(1), intensity_mode, gr)
    clouds = _sample_clouds(
        spine, times, window, rng.child(2), conditioned, particle_cap, max_rejects, -s_max * L, prune_delta
    )
    logger.debug(f"Front inputs: {len(times)} branching times, window [{window[0]:.4g}, {window[1]:.4g}]")
    return LimitClusterSample(spine, times, clouds, None, window)
