"""Exception types shared across the package.

Grouping them here lets the CLI map error categories onto exit codes
without string matching.
"""


class AdvmtError(Exception):
    """Base class for all library errors."""


class DimensionError(AdvmtError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(AdvmtError, ValueError):
    """An API precondition was violated (wrong rank, empty batch, ...)."""


class TopologyError(AdvmtError, ValueError):
    """A skeleton topology is malformed or does not match the data."""


class InsufficientFramesError(AdvmtError, ValueError):
    """A sequence is too short for the requested operation."""


class ConfigurationError(AdvmtError, ValueError):
    """A config value is invalid or inconsistent."""


class RateError(AdvmtError, ValueError):
    """A frame-rate conversion is not an integer decimation."""


class CsvParseError(AdvmtError, ValueError):
    """A motion CSV file is malformed; message carries row/column coordinates."""


class CheckpointError(AdvmtError, ValueError):
    """A checkpoint file has the wrong version, is truncated, or is corrupt."""


class HorizonError(AdvmtError, ValueError):
    """An evaluation horizon does not map onto a valid predicted frame."""


class ReportError(AdvmtError, ValueError):
    """Evaluation reports being combined are inconsistent."""


class DivergenceError(AdvmtError, RuntimeError):
    """Training produced a non-finite loss; message carries epoch and step."""
