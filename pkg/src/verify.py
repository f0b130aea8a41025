"""Verification suites: desk-scale statistical checks of the limit theorems.
Each suite draws its replicas from its own stream namespace under the run seed and
returns CheckResult records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from src.bbm import SQRT2, centering, gartner_centering, max_norm_particle, simulate_bbm
from src.cluster import compute_XL, conditioning_event, sample_front_inputs, sample_spine, simplified_front
from src.config import Config
from src.ensemble import run_ensemble
from src.errors import DomainError, UsageError
from src.front import FrontSurface, theta_grid
from src.logger import Logger
from src.paths import RngStream, TimeGrid, last_exit_time
from src.rho import SigmaGridSpec, revolve_surface, sample_rho, truncation_sigma
from src.stats import (
    empirical_tail,
    exponent_report,
    ks_truncated_exponential,
    ks_two_sample,
    occupancy_estimates,
    occupancy_hits,
    tail_ratio,
)
from src.utils import SpineModes

logger = Logger(__name__)

# Registry of verification suites, filled by the suite decorator.
suite_registry: dict[str, Callable] = {}


def suite(name: str) -> Callable:
    """Decorator to register a verification suite.

    Args:
        name (str): Suite name used on the command line.

    Returns:
        Callable: Decorator function.
    """

    def decorator(func: Callable) -> Callable:
        if name in suite_registry:
            raise ValueError(f"Suite {name} is already registered")
        suite_registry[name] = func
        return func

    return decorator


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check.

    Args:
        check_id (str): Check identifier.
        statistic (float): Observed statistic.
        threshold (float | list[float]): Bound or accepted interval.
        passed (bool): Whether the statistic satisfies the threshold.
        n (int): Replicas used.
        seed (int): Run seed.
        calibrated (bool, optional): False when the threshold was not fitted by a pilot
            run at the scale of the check. Defaults to True.
    """

    check_id: str
    statistic: float
    threshold: float | list[float]
    passed: bool
    n: int
    seed: int
    calibrated: bool = True

    def to_json(self) -> dict:
        statistic = None if not math.isfinite(self.statistic) else float(self.statistic)
        return {
            "check_id": self.check_id,
            "statistic": statistic,
            "threshold": self.threshold,
            "pass": bool(self.passed),
            "n": int(self.n),
            "seed": int(self.seed),
            "calibrated": bool(self.calibrated),
        }


@dataclass(frozen=True)
class SuiteContext:
    """Shared inputs of the suites of one verify run.

    Args:
        seed (int): Root seed.
        replicas (int | None): Replica override, None for the configured counts.
        workers (int): Worker processes.
        particle_cap (int): Node cap per BBM.
        config (Config): Lab configuration.
    """

    seed: int
    replicas: int | None
    workers: int
    particle_cap: int
    config: Config

    def params(self, check: str) -> dict:
        return self.config.threshold(check)

    def count(self, params: dict, key: str = "replicas") -> int:
        return int(self.replicas or params[key])

    def run(self, task: Callable, replicas: int, namespace: tuple[int, ...]) -> list:
        return run_ensemble(task, self.seed, replicas, self.workers, namespace)

    def result(
        self, check_id: str, statistic: float, threshold, passed: bool, n: int, calibrated: bool = True
    ) -> CheckResult:
        record = CheckResult(check_id, float(statistic), threshold, bool(passed), n, self.seed, calibrated)
        log = logger.info if record.passed else logger.warning
        log(
            f"Check {check_id}: statistic={statistic:.6g}, threshold={threshold}, pass={record.passed}"
            + ("" if calibrated else " (uncalibrated threshold)")
        )
        return record


def _in_band(value: float, low: float, high: float) -> bool:
    return math.isfinite(value) and low <= value <= high


# region replica tasks
def _rho_values(s_values: tuple[float, ...], spec: SigmaGridSpec, rng: RngStream) -> np.ndarray:
    return sample_rho(s_values, None, spec, rng).rho


def _rho_surface(s_values: tuple[float, ...], spec: SigmaGridSpec, rng: RngStream):
    return revolve_surface(sample_rho(s_values, None, spec, rng), theta_grid(2, 1))


def _centering_replica(dim: int, t: float, lifetimes: int, cap: int, rng: RngStream):
    tree = simulate_bbm(dim, t, rng, cap)
    life, windows = tree.lifetimes()
    return max_norm_particle(tree).recentered, life[:lifetimes], windows[:lifetimes]


def _max_first_coordinate(t: float, barrier: float, prune_delta: float, cap: int, rng: RngStream) -> float:
    return simulate_bbm(1, t, rng, cap, barrier=barrier, prune_delta=prune_delta).max_first_coordinate()


def _max_norm(dim: int, t: float, cap: int, rng: RngStream) -> float:
    return max_norm_particle(simulate_bbm(dim, t, rng, cap)).max_norm


def _theta_set(params: dict) -> np.ndarray:
    return theta_grid(int(params["dim"]), int(params["theta_steps"]))


def _front_and_xl(params: dict, cap: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    L, dim, s_max = float(params["L"]), int(params["dim"]), float(params["s_max"])
    s_grid = np.linspace(0.0, s_max, int(params["s_steps"]) + 1)
    sample = sample_front_inputs(
        dim, L, s_max, rng, conditioned=False, particle_cap=cap, prune_delta=float(params["prune_delta"])
    )
    front = simplified_front(
        sample.spine, sample.times, sample.clouds, L, float(params["epsilon"]), s_grid, _theta_set(params)
    )
    xl = compute_XL(sample.spine, L, s_grid, sigma_max=sample.spine.horizon / L**2)
    return front.heights, xl


def _scaled_last_exit(L: float, rng: RngStream) -> float:
    horizon = truncation_sigma(1.0, 1e-3) * L**2
    grid = TimeGrid.geometric(1e-3 * L**2, horizon, 4096)
    spine = sample_spine(SpineModes.APPROXIMATE, horizon, grid, 1, rng)
    return last_exit_time(spine.a_hat_path(), L) / L**2


# endregion


@suite("rho-scaling")
def rho_scaling(ctx: SuiteContext) -> list[CheckResult]:
    """Two-sample KS between rho(s) / s^{3/2} and rho(1) for each configured s."""
    params = ctx.params("rho_scaling")
    n, alpha = ctx.count(params), float(params["alpha"])
    spec = SigmaGridSpec.from_config(ctx.config.sampling)
    base = [r[0] for r in ctx.run(partial(_rho_values, (1.0,), spec), n, (1, 0))]
    results = []
    for k, s in enumerate(params["s_values"], start=1):
        s = float(s)
        scaled = [r[0] / s**1.5 for r in ctx.run(partial(_rho_values, (s,), spec), n, (1, k))]
        ks = ks_two_sample(scaled, base)
        critical = ks.critical_value(alpha)
        results.append(ctx.result(f"rho_scaling_s{s:g}", ks.statistic, critical, ks.statistic <= critical, n))
    return results


@suite("rho-convexity")
def rho_convexity(ctx: SuiteContext) -> list[CheckResult]:
    """Midpoint convexity of rho^2, monotonicity with rho(0) = 0, and positivity for s > 0."""
    params = ctx.params("rho_convexity")
    n, tolerance = ctx.count(params), float(params["tolerance"])
    s_values = tuple(np.linspace(0.0, float(params["s_max"]), int(params["s_steps"]) + 1))
    spec = SigmaGridSpec.from_config(ctx.config.sampling)
    samples = np.array(ctx.run(partial(_rho_values, s_values, spec), n, (2,)))
    squared = samples**2
    convexity_gap = np.max(squared[:, 1:-1] - 0.5 * (squared[:, :-2] + squared[:, 2:]))
    decrease = max(float(np.max(samples[:, :-1] - samples[:, 1:])), float(np.max(np.abs(samples[:, 0]))))
    positive = float(np.mean(np.all(samples[:, 1:] > 0, axis=1)))
    return [
        ctx.result("rho_convexity", convexity_gap, tolerance, convexity_gap <= tolerance, n),
        ctx.result("rho_monotone", decrease, 0.0, decrease <= 0.0, n),
        ctx.result("rho_positive", positive, 1.0, positive == 1.0, n),
    ]


@suite("rho-exponent")
def rho_exponent(ctx: SuiteContext) -> list[CheckResult]:
    """Log-log slope of the median of rho(s) over the window."""
    params = ctx.params("rho_exponent")
    n = ctx.count(params)
    low_s, high_s = (float(v) for v in params["s_window"])
    s_values = tuple(np.geomspace(low_s, high_s, int(params["s_points"])))
    spec = SigmaGridSpec.from_config(ctx.config.sampling)
    surfaces = ctx.run(partial(_rho_surface, s_values, spec), n, (3,))
    fit = exponent_report(surfaces, (low_s, high_s))
    band = [float(params["low"]), float(params["high"])]
    return [ctx.result("rho_exponent", fit.slope, band, _in_band(fit.slope, *band), n)]


@suite("centering")
def centering_suite(ctx: SuiteContext) -> list[CheckResult]:
    """Median of the recentered maximal norm, and the lifetime law of the same trees."""
    params = ctx.params("centering")
    n, dim, t = ctx.count(params), int(params["dim"]), float(params["t"])
    task = partial(_centering_replica, dim, t, int(params["lifetimes_per_tree"]), ctx.particle_cap)
    replicas = ctx.run(task, n, (4,))
    median = float(np.median([r[0] for r in replicas]))
    bound = float(params["bound"])
    ks = ks_truncated_exponential(np.concatenate([r[1] for r in replicas]), np.concatenate([r[2] for r in replicas]))
    alpha = float(params["alpha"])
    return [
        ctx.result(f"centering_d{dim}", abs(median), bound, abs(median) <= bound, n),
        ctx.result("lifetime_law", ks.statistic, ks.critical_value(alpha), not ks.rejects(alpha), ks.n1),
    ]


@suite("mallein-tail")
def mallein_tail(ctx: SuiteContext) -> list[CheckResult]:
    """Ratio of the tails of the one-dimensional maximum at m_t(1) + z1 and m_t(1) + z2.
    Particles that can't reach m_t(1) + z1 are pruned."""
    params = ctx.params("mallein_tail")
    n, t = ctx.count(params), float(params["t"])
    z1, z2 = (float(z) for z in params["z_values"])
    level = centering(t, 1)
    task = partial(_max_first_coordinate, t, level + z1, float(params["prune_delta"]), ctx.particle_cap)
    maxima = ctx.run(task, n, (5,))
    ratio = tail_ratio(maxima, level + z1, level + z2)
    target, factor = float(params["target"]), float(params["factor"])
    band = [target / factor, target * factor]
    return [ctx.result("mallein_tail", ratio, band, _in_band(ratio, *band), n)]


@suite("crude-bound")
def crude_bound(ctx: SuiteContext) -> list[CheckResult]:
    """Empirical P(R_s* >= z) against C e^{s - z^2 / (3 s)}."""
    params = ctx.params("crude_bound")
    n, dim, s = ctx.count(params), int(params["dim"]), float(params["s"])
    maxima = ctx.run(partial(_max_norm, dim, s, ctx.particle_cap), n, (6,))
    z_values = [float(z) for z in params["z_values"]]
    tails = empirical_tail(maxima, z_values)
    results = []
    for z, p in zip(z_values, tails):
        bound = float(params["constant"]) * math.exp(s - z**2 / (3 * s))
        results.append(ctx.result(f"crude_bound_z{z:g}", p, bound, p <= bound, n))
    return results


@suite("gartner-band")
def gartner_band(ctx: SuiteContext) -> list[CheckResult]:
    """Occupancy at the F-KPP front radius inside the band, and decrease along e1
    from the origin past the front to 3 sqrt(2) t, on common replicas."""
    params = ctx.params("gartner_band")
    n, dim, t, radius = ctx.count(params), int(params["dim"]), float(params["t"]), float(params["radius"])
    e1 = np.eye(dim)[0]
    points = np.array([0.0, gartner_centering(t, dim), 3 * SQRT2 * t])[:, None] * e1
    hits = np.column_stack(ctx.run(partial(occupancy_hits, dim, t, points, radius, ctx.particle_cap), n, (7,)))
    origin, front, far = occupancy_estimates(t, points, radius, hits)
    band = [float(params["low"]), float(params["high"])]
    decrease = max(front.estimate - origin.estimate, far.estimate - front.estimate)
    return [
        ctx.result("gartner_band", front.estimate, band, _in_band(front.estimate, *band), n),
        ctx.result("occupancy_monotone", decrease, 0.0, decrease <= 0.0, n),
    ]


@suite("conditioning")
def conditioning(ctx: SuiteContext) -> list[CheckResult]:
    """Acceptance rate of the conditioning event at a barrier-typical spine position."""
    params = ctx.params("conditioning")
    n, tau, dim = ctx.count(params, "attempts"), float(params["tau"]), int(params["dim"])
    a_tau = -SQRT2 * tau - math.sqrt(tau)
    task = partial(conditioning_event, tau, a_tau, dim, particle_cap=ctx.particle_cap, prune_delta=float(params["prune_delta"]))
    accepted = ctx.run(task, n, (8,))
    rate = float(np.mean(accepted))
    return [ctx.result("conditioning", rate, float(params["rate"]), rate >= float(params["rate"]), n)]


@suite("coupling")
def coupling(ctx: SuiteContext) -> list[CheckResult]:
    """Median over replicas of sup_s |8^{-1/4} simplified front - X_L|, worst theta."""
    params = ctx.params("coupling")
    n = ctx.count(params)
    replicas = ctx.run(partial(_front_and_xl, params, ctx.particle_cap), n, (9,))
    distances = [float(np.max(np.abs(8 ** (-0.25) * heights - xl[:, None]))) for heights, xl in replicas]
    median = float(np.median(distances))
    bound = float(params["bound"])
    calibrated = bool(params.get("calibrated", True))
    return [ctx.result(f"coupling_L{float(params['L']):g}", median, bound, median <= bound, n, calibrated)]


@suite("front-exponent")
def front_exponent(ctx: SuiteContext) -> list[CheckResult]:
    """Log-log slope of the median simplified front over the window."""
    params = ctx.params("front_exponent")
    n = ctx.count(params)
    replicas = ctx.run(partial(_front_and_xl, params, ctx.particle_cap), n, (10,))
    s_grid = np.linspace(0.0, float(params["s_max"]), int(params["s_steps"]) + 1)
    theta_set = _theta_set(params)
    surfaces = [_surface(s_grid, theta_set, heights, float(params["epsilon"])) for heights, _ in replicas]
    band = [float(params["low"]), float(params["high"])]
    try:
        slope = exponent_report(surfaces, tuple(float(v) for v in params["s_window"])).slope
    except DomainError as e:
        logger.warning(f"Front exponent fit failed: {e}")
        slope = math.nan
    check_id = f"front_exponent_L{float(params['L']):g}"
    return [ctx.result(check_id, slope, band, _in_band(slope, *band), n, bool(params.get("calibrated", True)))]


def _surface(s_grid: np.ndarray, theta_set: np.ndarray, heights: np.ndarray, epsilon: float) -> FrontSurface:
    return FrontSurface(s_grid=s_grid, theta_set=theta_set, heights=heights, epsilon=epsilon, slab_width=1.0)


@suite("last-exit")
def last_exit(ctx: SuiteContext) -> list[CheckResult]:
    """Two-sample KS between the scaled last exits tau_L(A_hat) / L^2 at two scales."""
    params = ctx.params("last_exit")
    n, alpha = ctx.count(params), float(params["alpha"])
    first, second = (float(v) for v in params["L_values"])
    a = ctx.run(partial(_scaled_last_exit, first), n, (11, 0))
    b = ctx.run(partial(_scaled_last_exit, second), n, (11, 1))
    ks = ks_two_sample(a, b)
    critical = ks.critical_value(alpha)
    return [ctx.result("last_exit", ks.statistic, critical, ks.statistic <= critical, n)]


def run_suites(names: list[str], ctx: SuiteContext) -> list[CheckResult]:
    """Runs the named suites in registry order; "all" selects every suite.

    Args:
        names (list[str]): Suite names.
        ctx (SuiteContext): Shared inputs.

    Returns:
        list[CheckResult]: Results of every check.

    Raises:
        UsageError: If a suite name is unknown.
    """
    selected = list(suite_registry) if "all" in names else names
    unknown = [name for name in selected if name not in suite_registry]
    if unknown:
        raise UsageError(f"Unknown suites {unknown}, available: {sorted(suite_registry)} or all")
    results = []
    for name in selected:
        logger.info(f"Running verification suite {name}")
        results.extend(suite_registry[name](ctx))
    return results
