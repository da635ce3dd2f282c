"""Exception hierarchy for the toolkit.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, violated internal invariants exit 4.
"""


class TomographyError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TomographyError):
    """Invalid or inconsistent configuration."""


class TopologyGenerationError(ConfigError):
    """Topology generation failed (e.g. graph still disconnected after retries)."""


class DataError(TomographyError):
    """Problems with measurement data or operation arguments."""


class InputError(DataError):
    """An argument violates an operation's preconditions."""


class InsufficientDataError(DataError):
    """Too few aligned samples to estimate anything."""


class MeasurementGapError(DataError):
    """A required receiver pair has no usable measurements."""


class LogFormatError(DataError):
    """Malformed measurement log."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvariantError(TomographyError):
    """An internal invariant was violated; indicates a bug or corrupted state."""
