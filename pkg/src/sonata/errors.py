"""Exception taxonomy for the telemetry toolkit.

Every error raised on a user-facing path derives from SonataError so the
CLI can map failures to exit codes in one place.
"""

from __future__ import annotations


class SonataError(Exception):
    """Base class for all toolkit errors."""


class TraceFormatError(SonataError):
    """Malformed trace input (bad header, bad value, non-monotone ts)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class QueryParseError(SonataError):
    """Query text does not match the grammar."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class QueryValidationError(SonataError):
    """Structurally parsed query violates typing or chaining rules."""


class UnsupportedPlanError(SonataError):
    """A requested pipeline places an operator the switch model cannot run."""


class InfeasiblePlanError(SonataError):
    """No plan satisfies the resource constraints; names the binding limit."""

    def __init__(self, message: str, binding: str | None = None):
        self.binding = binding
        super().__init__(message)


class ConfigError(SonataError):
    """Bad or missing run configuration."""
