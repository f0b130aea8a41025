from __future__ import annotations

import json


class LabError(Exception):
    """Base class for all errors raised by the lab.
    Each class carries the process exit code used by the CLI.

    Args:
        message (str): Human readable description.
    """

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def payload(self) -> dict[str, str | int | float | None]:
        """Machine readable representation of the error.

        Returns:
            dict[str, str | int | float | None]: Error payload.
        """
        return {"error": self.__class__.__name__, "message": self.message, "exit_code": self.exit_code}

    def to_json(self) -> str:
        """One-line JSON representation of the error for the error stream.

        Returns:
            str: JSON string without newlines.
        """
        return json.dumps(self.payload(), sort_keys=True)


class UsageError(LabError, ValueError):
    """Invalid command line usage or run configuration."""

    exit_code = 2


class ParameterError(UsageError):
    """Operation parameter out of its allowed range."""


class GridError(ParameterError):
    """Time grid is not strictly increasing from 0 or is not finite."""


class NormalizationError(ParameterError):
    """Vector expected to be a unit vector is not normalized."""


class PreconditionError(ParameterError):
    """Input does not satisfy the operation precondition."""


class DegenerateInputError(ParameterError):
    """Input is degenerate for the operation, e.g. a tree at horizon 0."""


class DomainError(ParameterError):
    """Input outside the mathematical domain of the operation."""


class TruncationError(ParameterError):
    """Path horizon is too short for the requested truncation.

    Args:
        message (str): Human readable description.
        required (float): Horizon required by the truncation rule.
    """

    def __init__(self, message: str, required: float):
        super().__init__(message)
        self.required = required

    def payload(self) -> dict[str, str | int | float | None]:
        data = super().payload()
        data["required_horizon"] = self.required
        return data


class ConfigurationError(UsageError):
    """Mode or configuration is inconsistent, e.g. tilted mode without a G table."""


class AssemblyError(UsageError):
    """Cluster pieces are indexed inconsistently."""


class TreeLookupError(LabError, LookupError):
    """Unknown particle id was requested from a tree."""

    exit_code = 2


class CapacityError(LabError):
    """Particle count would exceed the particle cap.

    Args:
        message (str): Human readable description.
        time (float): First time at which the cap would be violated.
    """

    exit_code = 3

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time

    def payload(self) -> dict[str, str | int | float | None]:
        data = super().payload()
        data["time"] = self.time
        return data


class BudgetError(LabError):
    """Rejection sampling budget exhausted.

    Args:
        message (str): Human readable description.
        acceptance_rate (float): Empirical acceptance rate observed.
    """

    exit_code = 4

    def __init__(self, message: str, acceptance_rate: float):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate

    def payload(self) -> dict[str, str | int | float | None]:
        data = super().payload()
        data["acceptance_rate"] = self.acceptance_rate
        return data


class ArtifactError(LabError, OSError):
    """Artifact or input file could not be read or written."""

    exit_code = 5
