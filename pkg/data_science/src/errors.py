"""
Exception hierarchy for the pretraining library.

Every domain failure raises a ChannelMaskError subclass. Each class carries the
CLI exit code it maps to and, optionally, the exception that caused it.
Plain precondition violations on library functions raise ValueError instead.
"""


class ChannelMaskError(Exception):
    """Base class for domain errors."""
    exit_code = 1

    def __init__(self, message: str, cause: Exception | None = None):
        super().__init__(message)
        self.cause = cause


class ConfigError(ChannelMaskError):
    """Invalid run configuration, unknown subject ids, or mismatched class/channel counts."""
    exit_code = 2

    def __init__(self, message: str, key_path: str | None = None, cause: Exception | None = None):
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message, cause)
        self.key_path = key_path


class DataError(ChannelMaskError):
    """Input data could not be read or does not satisfy a protocol precondition."""
    exit_code = 3


class SchemaError(DataError):
    """A CSV file lacks a column the schema requires."""


class CsvParseError(DataError):
    """A CSV cell could not be parsed as a finite real value."""

    def __init__(self, message: str, row_number: int, cause: Exception | None = None):
        super().__init__(f"row {row_number}: {message}", cause)
        self.row_number = row_number


class ProtocolError(DataError):
    """A sampling protocol cannot be honoured by the available windows."""


class NumericError(ChannelMaskError):
    """A loss or gradient became non-finite."""
    exit_code = 4


class UndefinedLossError(NumericError):
    """A masked loss was requested over an empty cell set."""


class CheckpointError(ChannelMaskError):
    """A checkpoint file is missing or unreadable."""
    exit_code = 3


class CheckpointFormatError(CheckpointError):
    """A checkpoint file is truncated, corrupt, or its manifest is inconsistent."""


class CheckpointShapeError(CheckpointError):
    """A checkpoint array does not have the shape the loading pipeline expects."""

    def __init__(self, message: str, array_name: str, cause: Exception | None = None):
        super().__init__(message, cause)
        self.array_name = array_name
