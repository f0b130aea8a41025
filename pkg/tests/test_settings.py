import argparse

import pytest

from src.config import Config
from src.errors import ConfigurationError, UsageError
from src.settings import RunConfig
from src.utils import Commands, deep_merge


def _namespace(command: str, **flags) -> argparse.Namespace:
    return argparse.Namespace(command=command, **flags)


def test_valid_config_has_no_violations():
    assert RunConfig(command=Commands.FRONT).validate() == []


def test_epsilon_out_of_range():
    violations = RunConfig(command=Commands.FRONT, epsilon=1.5).validate()
    assert len(violations) == 1
    assert "epsilon ∈ (0,1)" in violations[0]


def test_front_needs_two_dimensions():
    violations = RunConfig(command=Commands.FRONT, dim=1).validate()
    assert any("d ≥ 2" in v for v in violations)
    assert RunConfig(command=Commands.BBM, dim=1).validate() == []


def test_check_raises_usage_error():
    with pytest.raises(UsageError) as error:
        RunConfig(command=Commands.BBM, replicas=0).check()
    assert "replicas" in error.value.message
    assert error.value.exit_code == 2


def test_replicas_may_be_omitted_only_for_verify():
    assert RunConfig(command=Commands.VERIFY, replicas=None).validate() == []
    assert RunConfig(command=Commands.RHO, replicas=None).validate() != []


def test_json_round_trip_and_unknown_fields():
    config = RunConfig(command=Commands.RHO, s_max=4.0, seed=9)
    assert RunConfig.from_json(config.to_json()) == config
    with pytest.raises(UsageError):
        RunConfig.from_json({"command": "rho", "colour": "blue"})
    with pytest.raises(UsageError):
        RunConfig.from_json({"seed": 1})


def test_flags_override_config_defaults():
    config = RunConfig.from_namespace(_namespace(Commands.FRONT, dim=3, seed=None))
    assert config.dim == 3
    assert config.seed == Config().defaults["seed"]
    assert config.L == Config().defaults["L"]


def test_defaults_come_from_config_yml():
    config = RunConfig(command=Commands.CLUSTER)
    defaults = Config().defaults
    for name in ("dim", "horizon", "L", "ell", "epsilon", "s_max", "s_steps", "particle_cap", "cone_mode"):
        assert getattr(config, name) == defaults[name]
    assert config.L == 3.0


def test_verify_uses_configured_replicas():
    assert RunConfig.from_namespace(_namespace(Commands.VERIFY)).replicas is None
    assert RunConfig.from_namespace(_namespace(Commands.VERIFY, replicas=5)).replicas == 5


def test_s_grid():
    assert RunConfig(command=Commands.RHO, s_max=2.0, s_steps=4).s_grid == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_thresholds():
    assert Config().threshold("rho_scaling")["alpha"] == 0.01
    with pytest.raises(ConfigurationError):
        Config().threshold("no_such_check")


def test_config_requires_every_section(tmp_path):
    path = tmp_path / "broken.yml"
    path.write_text("defaults: {}\nsampling: {}\n")
    with pytest.raises(ConfigurationError):
        Config.from_yaml(str(path))
    assert "rho_scaling" in Config()._thresholds


def test_deep_merge():
    merged = deep_merge({"a": {"b": 1, "c": 2}, "d": 3}, {"a": {"b": 5}})
    assert merged == {"a": {"b": 5, "c": 2}, "d": 3}
