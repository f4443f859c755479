from __future__ import annotations
from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


# ---------- fitting ----------

class FitError(SimulationError):
    pass


class RankDeficientError(FitError):
    pass


class SeparationError(FitError):
    pass


class OneClassOnlyError(FitError):
    pass


# ---------- configuration ----------

class ConfigError(SimulationError, ValueError):
    """Invalid scenario, study or config file; `line`/`field` locate it when known."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.message = message
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)

    def at_line(self, line: Optional[int]) -> "ConfigError":
        """Same error type and message, located at `line`."""
        return type(self)(self.message, line=line, field=self.field)


class ParseError(ConfigError):
    pass


class UnknownScenarioError(ConfigError):
    pass


class NonPositiveVarianceError(SimulationError, ValueError):
    pass


# ---------- runtime ----------

class GoldStandardError(SimulationError):
    pass


class OutputExistsError(SimulationError, OSError):
    pass
