"""The limit front profile rho(s) = (sup_{sigma >= 0} sigma (s - R_sigma))^{1/2} of a
Bessel(3) path R, sampled on a common sigma grid so rho^2 is exactly a maximum of
linear functions of s."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.stats import norm

from src.errors import ConfigurationError, ParameterError, PreconditionError
from src.front import FrontSurface
from src.logger import Logger
from src.paths import (
    PathGrid,
    RngStream,
    TimeGrid,
    bridge_refine,
    extend_brownian_path,
    sample_brownian_path,
)

logger = Logger(__name__)

# sigma (s - R_sigma) is evaluated for at most this many (s, sigma) pairs at once
_CHUNK = 1 << 22


@dataclass(frozen=True)
class SigmaGridSpec:
    """Discretization of the sigma variable of the Legendre sup.

    Args:
        points (int): Number of geometric grid points.
        sigma_min (float): Smallest positive sigma.
        refine_points (int): Uniform points inserted around each coarse optimizer.
        truncation_tail (float): Allowed probability that the optimizer lies beyond the horizon.
        max_extensions (int): How many times the horizon may be doubled.
    """

    points: int = 4096
    sigma_min: float = 1e-4
    refine_points: int = 64
    truncation_tail: float = 1e-3
    max_extensions: int = 8

    @classmethod
    def from_config(cls, sampling: dict) -> SigmaGridSpec:
        """Creates the sigma grid settings from the sampling section of the config.

        Args:
            sampling (dict): Sampling parameters.

        Returns:
            SigmaGridSpec: Spec.
        """
        return cls(
            points=int(sampling.get("sigma_points", cls.points)),
            sigma_min=float(sampling.get("sigma_min", cls.sigma_min)),
            refine_points=int(sampling.get("refine_points", cls.refine_points)),
            truncation_tail=float(sampling.get("truncation_tail", cls.truncation_tail)),
            max_extensions=int(sampling.get("max_extensions", cls.max_extensions)),
        )


@dataclass(frozen=True)
class RhoSample:
    """One sample of the limit front profile over an s grid.

    Args:
        s_grid (np.ndarray): s values.
        rho (np.ndarray): rho(s), non-negative and non-decreasing.
        sigma_grid (TimeGrid): sigma discretization used.
        argmax_sigma (np.ndarray): Optimizer per s.
        sigma_horizon (float): Final sigma horizon after adaptive extension.
        truncation_bound (float): Probability that the optimizer for max(s_grid) lies beyond the horizon.
    """

    s_grid: np.ndarray
    rho: np.ndarray
    sigma_grid: TimeGrid
    argmax_sigma: np.ndarray
    sigma_horizon: float
    truncation_bound: float


def truncation_sigma(s_max: float, tail: float) -> float:
    """Smallest horizon Sigma with P(last exit of [0, s_max] by Bessel(3) > Sigma) <= tail.
    The last exit of level a by Bessel(3) from 0 has the law of a^2 / N^2.

    Args:
        s_max (float): Level.
        tail (float): Tail probability in (0, 1).

    Returns:
        float: Horizon.
    """
    if not 0 < tail < 1:
        raise ParameterError(f"Truncation tail must lie in (0, 1), got {tail}")
    q = norm.ppf(0.5 * (1.0 + tail))
    return s_max**2 / q**2


def last_exit_tail(level: float, horizon: float) -> float:
    """P(last exit of [0, level] by Bessel(3) from 0 > horizon) = 2 Phi(level / sqrt(horizon)) - 1.

    Args:
        level (float): Level.
        horizon (float): Horizon.

    Returns:
        float: Tail probability.
    """
    if horizon <= 0:
        return 1.0
    return math.erf(level / math.sqrt(2.0 * horizon))


def legendre_transform(sigma: np.ndarray, values: np.ndarray, s_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grid sup of sigma (s - values(sigma)) for several s, with the optimizer index.
    Ties resolve to the smallest sigma.

    Args:
        sigma (np.ndarray): Grid starting at 0.
        values (np.ndarray): Path values on the grid.
        s_values (np.ndarray): s values.

    Returns:
        tuple[np.ndarray, np.ndarray]: Sup values and optimizer indices.
    """
    sups = np.empty(s_values.size)
    idx = np.empty(s_values.size, dtype=np.int64)
    rows = max(1, _CHUNK // max(sigma.size, 1))
    for start in range(0, s_values.size, rows):
        block = s_values[start : start + rows]
        terms = sigma[None, :] * (block[:, None] - values[None, :])
        best = np.argmax(terms, axis=1)
        idx[start : start + rows] = best
        sups[start : start + rows] = terms[np.arange(block.size), best]
    return np.maximum(sups, 0.0), idx


def legendre_sup(path: PathGrid, s: float) -> tuple[float, float]:
    """max over grid sigma of sigma (s - path(sigma)), floored at 0 by the sigma = 0 term.

    Args:
        path (PathGrid): Non-negative scalar path on a grid starting at 0.
        s (float): Non-negative slope.

    Returns:
        tuple[float, float]: Sup value and its smallest optimizer.

    Raises:
        ParameterError: If s is negative.
        PreconditionError: If the path is not a non-negative scalar path.
    """
    if s < 0:
        raise ParameterError(f"s must be non-negative, got {s}")
    if not path.is_scalar or np.any(path.values < 0):
        raise PreconditionError("Legendre sup needs a non-negative scalar path")
    sups, idx = legendre_transform(path.times, path.values, np.array([float(s)]))
    return float(sups[0]), float(path.times[idx[0]])


def _refinement_times(sigma: np.ndarray, indices: Iterable[int], count: int) -> np.ndarray:
    extra = []
    last = sigma.size - 1
    for k in set(int(i) for i in indices):
        if k == 0 or count < 1:
            continue
        right = sigma[min(k + 1, last)]
        inner = np.linspace(sigma[k - 1], right, count + 2)[1:-1]
        extra.append(inner)
    if not extra:
        return np.zeros(0)
    return np.unique(np.concatenate(extra))


def _bessel_stays_above(path: PathGrid, level: float) -> bool:
    bessel = path.norm()
    tail = bessel.times >= 0.75 * bessel.grid.horizon
    return bool(np.all(bessel.values[tail] > level))


def sample_rho(
    s_grid: Iterable[float],
    sigma_horizon: float | None,
    sigma_grid_spec: SigmaGridSpec,
    rng: RngStream,
) -> RhoSample:
    """Sample rho(s) on s_grid from one Bessel(3) path shared by all s.

    The sigma grid is geometric from sigma_min to the horizon. The horizon defaults to the
    exact truncation rule and is doubled while the Bessel path fails to stay above max(s_grid)
    over the last quarter of the horizon. After a coarse pass, uniform points are inserted
    around every optimizer by Brownian bridge sampling and all s are recomputed on the
    refined common grid.

    Args:
        s_grid (Iterable[float]): Non-negative s values.
        sigma_horizon (float | None): Sigma horizon, None for the truncation rule.
        sigma_grid_spec (SigmaGridSpec): Discretization.
        rng (RngStream): Random stream.

    Returns:
        RhoSample: Sample.

    Raises:
        ConfigurationError: If the horizon can't be extended enough.
    """
    s_values = np.asarray(list(s_grid), dtype=float)
    if s_values.size == 0 or np.any(s_values < 0):
        raise ParameterError("s_grid must be a non-empty list of non-negative values")
    spec = sigma_grid_spec
    s_max = float(s_values.max())
    horizon = sigma_horizon or max(truncation_sigma(s_max, spec.truncation_tail), 10 * spec.sigma_min)
    if horizon <= spec.sigma_min:
        raise ConfigurationError(f"sigma_horizon {horizon} must exceed sigma_min {spec.sigma_min}")

    grid = TimeGrid.geometric(spec.sigma_min, horizon, spec.points)
    brownian = sample_brownian_path(3, grid, rng.child(0))
    extensions = 0
    while not _bessel_stays_above(brownian, s_max):
        if extensions >= spec.max_extensions:
            raise ConfigurationError(
                f"Bessel path did not stay above {s_max} after {extensions} horizon doublings"
            )
        extra = np.geomspace(horizon, 2 * horizon, max(spec.points // 8, 2) + 1)[1:]
        brownian = extend_brownian_path(brownian, extra, rng.child(1 + extensions))
        horizon *= 2
        extensions += 1
    if extensions:
        logger.debug(f"sigma horizon extended {extensions} times to {horizon:.6g}")

    bessel = brownian.norm()
    _, coarse = legendre_transform(bessel.times, bessel.values, s_values)
    extra = _refinement_times(bessel.times, coarse[s_values > 0], spec.refine_points)
    if extra.size:
        brownian = bridge_refine(brownian, extra, rng.child(1 + spec.max_extensions))
        bessel = brownian.norm()

    sups, idx = legendre_transform(bessel.times, bessel.values, s_values)
    rho = np.sqrt(sups)
    rho[s_values == 0] = 0.0
    bound = last_exit_tail(s_max, horizon)
    if bound > spec.truncation_tail:
        logger.warning(f"Truncation bound {bound:.3g} exceeds tolerance {spec.truncation_tail}")
    return RhoSample(
        s_grid=s_values,
        rho=rho,
        sigma_grid=bessel.grid,
        argmax_sigma=bessel.times[idx],
        sigma_horizon=horizon,
        truncation_bound=bound,
    )


def revolve_surface(rho: RhoSample, theta_set: np.ndarray) -> FrontSurface:
    """Surface formed by revolving rho(s) around the e1 axis: constant in theta.

    Args:
        rho (RhoSample): Profile.
        theta_set (np.ndarray): Directions, shape (m, d - 1).

    Returns:
        FrontSurface: Surface with identical theta columns.
    """
    theta_set = np.asarray(theta_set, dtype=float)
    heights = np.repeat(rho.rho[:, None], theta_set.shape[0], axis=1)
    return FrontSurface(
        s_grid=rho.s_grid,
        theta_set=theta_set,
        heights=heights,
        epsilon=float("nan"),
        slab_width=float("nan"),
    )
