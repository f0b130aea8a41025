import math

import pytest

from src.config import Config
from src.errors import UsageError
from src.verify import CheckResult, SuiteContext, run_suites, suite_registry

SUITES = [
    "rho-scaling",
    "rho-convexity",
    "rho-exponent",
    "centering",
    "mallein-tail",
    "crude-bound",
    "gartner-band",
    "conditioning",
    "coupling",
    "front-exponent",
    "last-exit",
]


def _context(replicas: int | None, seed: int = 7) -> SuiteContext:
    return SuiteContext(seed=seed, replicas=replicas, workers=1, particle_cap=2_000_000, config=Config())


def test_every_suite_is_registered():
    assert list(suite_registry) == SUITES


def test_check_result_json():
    record = CheckResult("front_exponent_L3", math.nan, [1.2, 1.8], False, 10, 7).to_json()
    assert record == {
        "check_id": "front_exponent_L3",
        "statistic": None,
        "threshold": [1.2, 1.8],
        "pass": False,
        "n": 10,
        "seed": 7,
        "calibrated": True,
    }


def test_replica_override():
    assert _context(None).count({"replicas": 2000}) == 2000
    assert _context(12).count({"replicas": 2000}) == 12


def test_unknown_suite():
    with pytest.raises(UsageError):
        run_suites(["no-such-suite"], _context(10))


def test_rho_scaling_checks():
    results = run_suites(["rho-scaling"], _context(20))
    assert [r.check_id for r in results] == ["rho_scaling_s0.5", "rho_scaling_s2", "rho_scaling_s4"]
    assert all(0 <= r.statistic <= 1 and r.n == 20 and r.seed == 7 for r in results)


def test_rho_convexity_checks():
    results = {r.check_id: r for r in run_suites(["rho-convexity"], _context(3))}
    assert set(results) == {"rho_convexity", "rho_monotone", "rho_positive"}
    assert results["rho_monotone"].passed
    assert results["rho_convexity"].passed


def test_crude_bound_checks():
    results = run_suites(["crude-bound"], _context(20))
    assert [r.check_id for r in results] == ["crude_bound_z8", "crude_bound_z10", "crude_bound_z12"]
    assert all(0 <= r.statistic <= 1 for r in results)


def test_last_exit_check():
    (result,) = run_suites(["last-exit"], _context(20))
    assert result.check_id == "last_exit"
    assert 0 <= result.statistic <= 1


@pytest.mark.slow
def test_rho_scaling_at_two():
    results = {r.check_id: r for r in run_suites(["rho-scaling"], _context(2000))}
    assert results["rho_scaling_s2"].passed


@pytest.mark.slow
def test_conditioning_acceptance():
    (result,) = run_suites(["conditioning"], _context(None))
    assert result.passed


def _scaled_down(monkeypatch, check: str, **overrides) -> None:
    """Overrides thresholds of one check for the duration of a test."""
    threshold = Config.threshold

    def patched(self, name: str) -> dict:
        params = threshold(self, name)
        if name == check:
            params.update(overrides)
        return params

    monkeypatch.setattr(Config, "threshold", patched)


def test_uncalibrated_checks_are_reported():
    record = CheckResult("coupling_L3", 0.2, 0.35, True, 200, 7, calibrated=False).to_json()
    assert record["calibrated"] is False
    params = Config().threshold("coupling")
    assert params["calibrated"] is False
    assert "pilot_seed" not in params
    assert Config().threshold("front_exponent")["calibrated"] is False


def test_centering_checks(monkeypatch):
    _scaled_down(monkeypatch, "centering", t=6.0)
    results = run_suites(["centering"], _context(3))
    assert [r.check_id for r in results] == ["centering_d2", "lifetime_law"]
    assert all(math.isfinite(r.statistic) for r in results)
    assert results[0].threshold == 3.0
    assert 0 <= results[1].statistic <= 1


def test_mallein_tail_check():
    (result,) = run_suites(["mallein-tail"], _context(20))
    assert result.check_id == "mallein_tail"
    assert result.threshold == pytest.approx([2.057 / 2, 2.057 * 2])
    # the ratio is infinite when no replica reaches the second level
    assert not math.isnan(result.statistic)
    assert result.statistic >= 1
    assert result.n == 20


def test_gartner_band_checks():
    results = {r.check_id: r for r in run_suites(["gartner-band"], _context(20))}
    assert set(results) == {"gartner_band", "occupancy_monotone"}
    assert 0 <= results["gartner_band"].statistic <= 1
    assert results["occupancy_monotone"].passed
    assert results["occupancy_monotone"].threshold == 0.0


def test_rho_exponent_check():
    (result,) = run_suites(["rho-exponent"], _context(5))
    assert result.check_id == "rho_exponent"
    assert math.isfinite(result.statistic)
    assert result.threshold == [1.35, 1.65]


def test_coupling_check(monkeypatch):
    _scaled_down(monkeypatch, "coupling", L=1.5, s_max=0.5, s_steps=4, prune_delta=1e-2)
    (result,) = run_suites(["coupling"], _context(2))
    assert result.check_id == "coupling_L1.5"
    assert math.isfinite(result.statistic) and result.statistic >= 0
    assert not result.calibrated
    assert result.n == 2


def test_front_exponent_check(monkeypatch):
    _scaled_down(
        monkeypatch, "front_exponent", L=1.5, s_max=1.0, s_steps=4, s_window=[0.5, 1.0], prune_delta=1e-2
    )
    (result,) = run_suites(["front-exponent"], _context(3))
    assert result.check_id == "front_exponent_L1.5"
    assert not result.calibrated
    # a fit over empty fronts is reported as NaN and fails
    assert math.isfinite(result.statistic) or not result.passed
    assert result.threshold == [1.2, 1.8]


@pytest.mark.slow
@pytest.mark.parametrize("name", ["centering", "mallein-tail", "gartner-band", "rho-exponent"])
def test_suite_passes_at_configured_replicas(name):
    results = run_suites([name], _context(None))
    assert results
    assert all(r.passed for r in results), [r.to_json() for r in results]


@pytest.mark.slow
@pytest.mark.xfail(reason="bounds are the L = 30 ones and no pilot run has calibrated them at L = 3", strict=False)
@pytest.mark.parametrize("name", ["coupling", "front-exponent"])
def test_front_checks_pass_at_configured_replicas(name):
    results = run_suites([name], _context(None))
    assert all(r.passed for r in results), [r.to_json() for r in results]
