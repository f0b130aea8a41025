"""Statistical harness: two-sample KS, power-law fits, occupancy estimates and tail helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from src.bbm import DEFAULT_PARTICLE_CAP, simulate_bbm
from src.errors import DomainError, ParameterError, PreconditionError
from src.front import FrontSurface
from src.logger import Logger
from src.paths import RngStream

logger = Logger(__name__)


@dataclass(frozen=True)
class KsResult:
    """Kolmogorov-Smirnov test result.

    Args:
        statistic (float): Sup-distance between the empirical CDFs, in [0, 1].
        p_approx (float): Asymptotic Kolmogorov tail probability.
        n1 (int): Size of the first sample.
        n2 (int): Size of the second sample, 0 for one-sample tests.
    """

    statistic: float
    p_approx: float
    n1: int
    n2: int

    @property
    def effective_size(self) -> float:
        if self.n2 == 0:
            return float(self.n1)
        return self.n1 * self.n2 / (self.n1 + self.n2)

    def critical_value(self, alpha: float) -> float:
        """Statistic above which the test rejects at level alpha.

        Args:
            alpha (float): Level.

        Returns:
            float: Critical sup-distance.
        """
        return float(stats.kstwobign.isf(alpha)) / math.sqrt(self.effective_size)

    def rejects(self, alpha: float) -> bool:
        return self.p_approx < alpha


def ks_two_sample(a: Sequence[float], b: Sequence[float], min_size: int = 10) -> KsResult:
    """Two-sample KS test with the asymptotic Kolmogorov distribution at effective
    size n1 n2 / (n1 + n2).

    Args:
        a (Sequence[float]): First sample.
        b (Sequence[float]): Second sample.
        min_size (int, optional): Smallest accepted sample size. Defaults to 10.

    Returns:
        KsResult: Test result.

    Raises:
        ParameterError: If a sample is smaller than min_size.
    """
    x = np.sort(np.asarray(a, dtype=float))
    y = np.sort(np.asarray(b, dtype=float))
    if x.size < min_size or y.size < min_size:
        raise ParameterError(f"KS test needs at least {min_size} values per sample, got {x.size} and {y.size}")
    support = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, support, side="right") / x.size
    cdf_y = np.searchsorted(y, support, side="right") / y.size
    statistic = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    p_approx = float(np.clip(stats.kstwobign.sf(en * statistic), 0.0, 1.0))
    return KsResult(statistic, p_approx, int(x.size), int(y.size))


def ks_truncated_exponential(lifetimes: np.ndarray, windows: np.ndarray) -> KsResult:
    """KS test of lifetimes against Exp(1) conditioned on each lifetime being shorter
    than its window, through the probability integral transform to Uniform(0, 1).

    Args:
        lifetimes (np.ndarray): Observed lifetimes.
        windows (np.ndarray): Time each particle had left at birth.

    Returns:
        KsResult: One-sample test result.
    """
    lifetimes = np.asarray(lifetimes, dtype=float)
    windows = np.asarray(windows, dtype=float)
    if lifetimes.size == 0:
        raise ParameterError("No lifetimes to test")
    u = -np.expm1(-lifetimes) / -np.expm1(-windows)
    result = stats.kstest(u, "uniform")
    return KsResult(float(result.statistic), float(result.pvalue), int(u.size), 0)


def poisson_gof(counts: Sequence[int], mean: float) -> float:
    """Chi-square goodness-of-fit p-value of counts against Poisson(mean),
    with cells merged until each expects at least 5 observations.

    Args:
        counts (Sequence[int]): Observed counts.
        mean (float): Poisson mean.

    Returns:
        float: p-value.
    """
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    low, high = int(stats.poisson.ppf(1e-6, mean)), int(stats.poisson.isf(1e-6, mean)) + 1
    edges = [low]
    for k in range(low + 1, high + 1):
        expected = n * (stats.poisson.cdf(k - 1, mean) - stats.poisson.cdf(edges[-1] - 1, mean))
        if expected >= 5:
            edges.append(k)
    if len(edges) < 3:
        raise ParameterError("Too few observations for a chi-square test")
    # open ended outer cells
    inner = np.array(edges[1:-1])
    observed = np.bincount(np.searchsorted(inner, counts, side="right"), minlength=inner.size + 1)
    cdf = stats.poisson.cdf(inner - 1, mean)
    probs = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    result = stats.chisquare(observed, n * probs)
    return float(result.pvalue)


@dataclass(frozen=True)
class SlopeFit:
    """Least squares fit of log h against log s."""

    slope: float
    intercept: float
    r_squared: float
    n: int


def fit_power_law(s: Sequence[float], h: Sequence[float]) -> SlopeFit:
    """Fits h = C s^slope by least squares on (log s, log h).

    Args:
        s (Sequence[float]): Positive abscissae.
        h (Sequence[float]): Positive values.

    Returns:
        SlopeFit: Fit.

    Raises:
        DomainError: If a value is not positive.
        ParameterError: If fewer than 3 points are given.
    """
    s = np.asarray(s, dtype=float)
    h = np.asarray(h, dtype=float)
    if s.shape != h.shape:
        raise ParameterError(f"Fit inputs differ in length: {s.size} and {h.size}")
    if s.size < 3:
        raise ParameterError(f"Power law fit needs at least 3 points, got {s.size}")
    if np.any(s <= 0) or np.any(h <= 0):
        raise DomainError("Power law fit needs positive values")
    log_s, log_h = np.log(s), np.log(h)
    if np.ptp(log_h) == 0:
        return SlopeFit(0.0, float(log_h[0]), 0.0, int(s.size))
    fit = stats.linregress(log_s, log_h)
    return SlopeFit(float(fit.slope), float(fit.intercept), float(min(fit.rvalue**2, 1.0)), int(s.size))


def exponent_report(front_ensembles: Sequence[FrontSurface], s_window: tuple[float, float]) -> SlopeFit:
    """Slope of log median height against log s over the window, pooling replicas
    and theta columns.

    Args:
        front_ensembles (Sequence[FrontSurface]): Surfaces sharing their grids.
        s_window (tuple[float, float]): Closed s window.

    Returns:
        SlopeFit: Fit.
    """
    if not front_ensembles:
        raise ParameterError("No surfaces to fit")
    first = front_ensembles[0]
    for surface in front_ensembles[1:]:
        if not np.array_equal(surface.s_grid, first.s_grid) or surface.heights.shape != first.heights.shape:
            raise PreconditionError("Surfaces do not share their grids")
    low, high = s_window
    in_window = (first.s_grid >= low) & (first.s_grid <= high) & (first.s_grid > 0)
    if not in_window.any():
        raise ParameterError(f"No s grid values inside the window {s_window}")
    pooled = np.stack([surface.heights[in_window] for surface in front_ensembles])
    medians = np.median(pooled.transpose(1, 0, 2).reshape(int(in_window.sum()), -1), axis=1)
    return fit_power_law(first.s_grid[in_window], medians)


@dataclass(frozen=True)
class OccupancyEstimate:
    """Monte Carlo estimate of the probability that some particle lies within
    `radius` of `x` at time t."""

    t: float
    x: np.ndarray
    radius: float
    estimate: float
    stderr: float
    replicas: int


def occupancy_estimates(t: float, points: np.ndarray, radius: float, hits: np.ndarray) -> list[OccupancyEstimate]:
    """Binomial estimates from a (points, replicas) boolean hit matrix.

    Args:
        t (float): Time.
        points (np.ndarray): Query points, shape (k, dim).
        radius (float): Ball radius.
        hits (np.ndarray): Hit indicators, shape (k, replicas).

    Returns:
        list[OccupancyEstimate]: One estimate per point.
    """
    estimates = []
    for point, row in zip(points, hits):
        p = float(row.mean())
        estimates.append(OccupancyEstimate(t, point, radius, p, math.sqrt(p * (1 - p) / row.size), int(row.size)))
    return estimates


def occupancy_hits(
    dim: int,
    t: float,
    points: np.ndarray,
    radius: float,
    particle_cap: int,
    rng: RngStream,
) -> np.ndarray:
    """Whether one BBM replica has a particle within `radius` of each query point at time t.

    Args:
        dim (int): Spatial dimension.
        t (float): Time.
        points (np.ndarray): Query points, shape (k, dim).
        radius (float): Ball radius.
        particle_cap (int): Node cap.
        rng (RngStream): Replica stream.

    Returns:
        np.ndarray: Boolean hit per point.
    """
    leaves = simulate_bbm(dim, t, rng, particle_cap).leaf_positions()
    distances = np.linalg.norm(leaves[None, :, :] - points[:, None, :], axis=2)
    return distances.min(axis=1) <= radius


def estimate_occupancy(
    dim: int,
    t: float,
    x: np.ndarray,
    radius: float,
    replicas: int,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
) -> OccupancyEstimate:
    """Fraction of BBM replicas with a particle within `radius` of x at time t.

    Args:
        dim (int): Spatial dimension.
        t (float): Time.
        x (np.ndarray): Query point.
        radius (float): Ball radius.
        replicas (int): Number of replicas.
        rng (RngStream): Random stream, replica k uses child k.
        particle_cap (int, optional): Node cap. Defaults to 2e6.

    Returns:
        OccupancyEstimate: Estimate with binomial standard error.
    """
    return estimate_occupancy_profile(dim, t, [np.asarray(x, dtype=float)], radius, replicas, rng, particle_cap)[0]


def estimate_occupancy_profile(
    dim: int,
    t: float,
    points: Sequence[np.ndarray],
    radius: float,
    replicas: int,
    rng: RngStream,
    particle_cap: int = DEFAULT_PARTICLE_CAP,
) -> list[OccupancyEstimate]:
    """Occupancy estimates at several points from the same replicas (common random numbers).

    Args:
        dim (int): Spatial dimension.
        t (float): Time.
        points (Sequence[np.ndarray]): Query points.
        radius (float): Ball radius.
        replicas (int): Number of replicas.
        rng (RngStream): Random stream, replica k uses child k.
        particle_cap (int, optional): Node cap. Defaults to 2e6.

    Returns:
        list[OccupancyEstimate]: One estimate per point.
    """
    if radius <= 0 or replicas < 1:
        raise ParameterError(f"Occupancy needs a positive radius and replicas, got {radius} and {replicas}")
    queries = np.array([np.asarray(p, dtype=float) for p in points]).reshape(len(points), dim)
    hits = np.column_stack([occupancy_hits(dim, t, queries, radius, particle_cap, rng.child(k)) for k in range(replicas)])
    return occupancy_estimates(t, queries, radius, hits)


def empirical_tail(samples: Sequence[float], thresholds: Sequence[float]) -> np.ndarray:
    """Empirical P(X >= z) for each threshold z.

    Args:
        samples (Sequence[float]): Sample.
        thresholds (Sequence[float]): Thresholds.

    Returns:
        np.ndarray: Tail probabilities.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    z = np.asarray(thresholds, dtype=float)
    return (x.size - np.searchsorted(x, z, side="left")) / x.size


def tail_ratio(samples: Sequence[float], z1: float, z2: float) -> float:
    """Ratio P(X >= z1) / P(X >= z2) of empirical tails, inf when the second tail is empty."""
    p1, p2 = empirical_tail(samples, [z1, z2])
    return float(p1 / p2) if p2 > 0 else math.inf


def weighted_quantile(values: Sequence[float], weights: Sequence[float], q: float) -> float:
    """Quantile of the self-normalized weighted empirical distribution.

    Args:
        values (Sequence[float]): Values.
        weights (Sequence[float]): Non-negative weights with positive sum.
        q (float): Level in [0, 1].

    Returns:
        float: Smallest value whose weighted CDF reaches q.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.size == 0:
        raise ParameterError("Values and weights must be non-empty and of equal length")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ParameterError("Weights must be non-negative with positive sum")
    if not 0 <= q <= 1:
        raise ParameterError(f"Quantile level must lie in [0, 1], got {q}")
    order = np.argsort(values, kind="stable")
    cdf = np.cumsum(weights[order]) / weights.sum()
    idx = min(int(np.searchsorted(cdf, q, side="left")), values.size - 1)
    return float(values[order][idx])


def effective_sample_size(weights: Sequence[float]) -> float:
    """Kish effective sample size of importance weights."""
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w**2)) if np.any(w > 0) else 0.0
