from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional


class LogSource(str, Enum):
    """Represents which part of the laboratory the log originates from."""

    # Cylinder sampling, volume estimates and boundary classification.
    GEOMETRY = "geometry"

    # The time march of the kinetic solver.
    SOLVER = "solver"

    # Measurements over solver output (oscillations, residuals, norms).
    ANALYSIS = "analysis"

    # Verification checks and their verdicts.
    HARNESS = "harness"

    # Scenario parsing and report writing.
    CLI = "cli"


class LogLevel(str, Enum):
    """Represents the log level."""

    TRACE = "trace"
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"

    @property
    def rank(self) -> int:
        return _LEVEL_RANKS[self]


_LEVEL_RANKS = {
    LogLevel.TRACE: 0,
    LogLevel.DEBUG: 1,
    LogLevel.INFO: 2,
    LogLevel.WARNING: 3,
    LogLevel.ERROR: 4,
}


@dataclass
class Log:
    """A structured log message with a source, a level and an optional
    run identifier."""

    message: str
    source: LogSource
    level: LogLevel = LogLevel.INFO
    run_id: Optional[str] = None

    def __str__(self) -> str:
        parts = []
        if self.run_id:
            parts.append(f"[{self.run_id[:6]}]")
        else:
            parts.append("[global]")

        parts.append(f"[{self.source.value}]".ljust(11))
        parts.append(f"[{self.level.value}]".ljust(10))
        return " ".join(parts) + self.message
