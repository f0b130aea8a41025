from __future__ import annotations

import argparse
import json
import os
from dataclasses import asdict, dataclass, field, fields

from src.config import Config
from src.errors import UsageError
from src.globals import OUTPUT_DIR
from src.logger import Logger
from src.utils import Commands, ConeModes, Formats, IntensityModes, SpineModes

logger = Logger(__name__)

SUITE_ALL = "all"


def _configured(name: str):
    """Dataclass field defaulting to the value of `name` in the defaults section of config.yml."""
    return field(default_factory=lambda: Config().defaults[name])


@dataclass
class RunConfig:
    """Resolved configuration of a single run: defaults from config.yml overridden by
    command line flags. Serialized into the run manifest.

    Args:
        command (str): Command name.
        replicas (int | None): Replica count; None lets every verification check use
            its configured count.
    """

    command: str
    dim: int = _configured("dim")
    horizon: float = _configured("horizon")
    L: float = _configured("L")
    ell: float = _configured("ell")
    epsilon: float = _configured("epsilon")
    slab_width: float = _configured("slab_width")
    s_max: float = _configured("s_max")
    s_steps: int = _configured("s_steps")
    theta_steps: int = _configured("theta_steps")
    sigma_horizon: float | None = _configured("sigma_horizon")
    replicas: int | None = _configured("replicas")
    seed: int = _configured("seed")
    particle_cap: int = _configured("particle_cap")
    spine_mode: str = _configured("spine_mode")
    intensity_mode: str = _configured("intensity_mode")
    cone_mode: str = _configured("cone_mode")
    output: str = OUTPUT_DIR
    format: str = _configured("format")
    workers: int = _configured("workers")
    gr_table: str | None = None
    suite: list[str] = field(default_factory=lambda: [SUITE_ALL])

    def validate(self) -> list[str]:
        """Lists every violated constraint; empty iff the run would be accepted.

        Returns:
            list[str]: Violations, each naming its field.
        """
        violations = []
        if self.command not in Commands.all():
            violations.append(f"command must be one of {Commands.all()}, got {self.command}")
        if self.dim < 1:
            violations.append(f"dim ≥ 1 required, got {self.dim}")
        elif self.dim < 2 and self.command in Commands.planar():
            violations.append(f"dim: d ≥ 2 required for the {self.command} command, got {self.dim}")
        if self.horizon < 0:
            violations.append(f"horizon ≥ 0 required, got {self.horizon}")
        if not 0 < self.epsilon < 1:
            violations.append(f"epsilon ∈ (0,1) required, got {self.epsilon}")
        if self.slab_width <= 0:
            violations.append(f"slab_width > 0 required, got {self.slab_width}")
        if self.L <= 0:
            violations.append(f"L > 0 required, got {self.L}")
        if self.command == Commands.LANDSCAPE and not 0 < self.ell < self.horizon:
            violations.append(f"ell ∈ (0, horizon) required, got {self.ell}")
        if self.s_max < 0:
            violations.append(f"s_max ≥ 0 required, got {self.s_max}")
        if self.s_steps < 1:
            violations.append(f"s_steps ≥ 1 required, got {self.s_steps}")
        if self.theta_steps < 1:
            violations.append(f"theta_steps ≥ 1 required, got {self.theta_steps}")
        if self.sigma_horizon is not None and self.sigma_horizon <= 0:
            violations.append(f"sigma_horizon > 0 required, got {self.sigma_horizon}")
        if self.replicas is None:
            if self.command != Commands.VERIFY:
                violations.append("replicas ≥ 1 required")
        elif self.replicas < 1:
            violations.append(f"replicas ≥ 1 required, got {self.replicas}")
        if not 0 <= self.seed < 2**64:
            violations.append(f"seed must be a 64-bit non-negative integer, got {self.seed}")
        if self.particle_cap < 1:
            violations.append(f"particle_cap ≥ 1 required, got {self.particle_cap}")
        if self.spine_mode not in (SpineModes.APPROXIMATE, SpineModes.TILTED):
            violations.append(f"spine_mode must be approximate or tilted, got {self.spine_mode}")
        if self.intensity_mode not in (IntensityModes.RATE2, IntensityModes.TILTED):
            violations.append(f"intensity_mode must be rate2 or tilted, got {self.intensity_mode}")
        if self.cone_mode not in (ConeModes.SIGNED, ConeModes.ABSOLUTE):
            violations.append(f"cone_mode must be signed or absolute, got {self.cone_mode}")
        if self.format not in (Formats.CSV, Formats.JSON):
            violations.append(f"format must be csv or json, got {self.format}")
        if self.workers < 1:
            violations.append(f"workers ≥ 1 required, got {self.workers}")
        if self.gr_table is not None and not os.path.isfile(self.gr_table):
            violations.append(f"gr_table file {self.gr_table} does not exist")
        return violations

    def check(self) -> RunConfig:
        """Raises on the first violation.

        Returns:
            RunConfig: Self.

        Raises:
            UsageError: If the configuration is invalid.
        """
        violations = self.validate()
        if violations:
            raise UsageError("; ".join(violations))
        return self

    @property
    def s_grid(self) -> list[float]:
        """Uniform s grid with s_steps intervals on [0, s_max].

        Returns:
            list[float]: s values.
        """
        return [self.s_max * i / self.s_steps for i in range(self.s_steps + 1)]

    def to_json(self) -> dict:
        """Returns configuration as JSON-compatible mapping.

        Returns:
            dict: Configuration.
        """
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, data: dict) -> RunConfig:
        """Creates configuration from a mapping produced by to_json.

        Args:
            data (dict): Mapping.

        Returns:
            RunConfig: Configuration.

        Raises:
            UsageError: If the mapping has unknown fields or no command.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"Unknown configuration fields: {sorted(unknown)}")
        if "command" not in data:
            raise UsageError("Configuration has no command")
        return cls(**data)

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> RunConfig:
        """Merges parsed command line flags over the defaults of config.yml.
        Flags left unset (None) keep the default.

        Args:
            args (argparse.Namespace): Parsed arguments with a `command` attribute.

        Returns:
            RunConfig: Configuration.
        """
        known = {f.name for f in fields(cls)}
        data = {"command": args.command}
        if args.command == Commands.VERIFY:
            data["replicas"] = None
        for name, value in vars(args).items():
            if name in known and value is not None:
                data[name] = value
        config = cls.from_json(data)
        logger.debug(f"Resolved run configuration: {config.dumps()}")
        return config
