"""Exception types shared across the package."""

from __future__ import annotations


class SaracoderError(Exception):
    """Base class for all errors raised by this package."""


class SourceParseError(SaracoderError):
    """A source file could not be parsed into a statement graph."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


class InvalidAnchorError(SaracoderError, ValueError):
    """The requested slice anchor is not a node of the graph."""


class IndexLoadError(SaracoderError):
    """An index directory is missing, truncated, or corrupt."""


class IncompatibleIndexError(IndexLoadError):
    """The on-disk index format version does not match this reader."""


class TransportError(SaracoderError):
    """A remote endpoint (embedding provider or completer) could not be reached."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class BudgetExceededError(SaracoderError):
    """The prompt token budget cannot hold even the unfinished context."""


class ConfigError(SaracoderError):
    """A configuration file or flag set failed validation."""


class SampleFormatError(SaracoderError):
    """An evaluation sample file contains a malformed or incomplete line."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}: line {line_no}: {message}")
        self.path = path
        self.line_no = line_no
