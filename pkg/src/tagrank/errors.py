"""Exception types shared across the package, with CLI exit-code mapping."""

from __future__ import annotations

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_TRANSPORT = 2
EXIT_INTERNAL = 3


class TagrankError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_INTERNAL


class InputError(TagrankError, ValueError):
    """Invalid inputs, configuration, or corpus contents."""

    exit_code = EXIT_INPUT


class ParseError(InputError):
    """Malformed record in a line-delimited input file."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(InputError):
    """Corrupt or incompatible binary artifact (bad magic, version, truncation)."""


class TransportError(TagrankError):
    """A remote endpoint could not be reached or answered with an error status."""

    exit_code = EXIT_TRANSPORT

    def __init__(self, message: str, batch_index: int | None = None):
        if batch_index is not None:
            message = f"{message} (batch {batch_index})"
        super().__init__(message)
        self.batch_index = batch_index


class ProtocolError(TagrankError):
    """A remote endpoint answered 2xx but violated the wire contract."""

    exit_code = EXIT_TRANSPORT
