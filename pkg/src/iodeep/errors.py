"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IodeepError(Exception):
    """Base class for all package errors."""


class PidError(IodeepError):
    """Invalid identifier construction or parse."""


class ConflictError(IodeepError):
    """Registration collides with different content under the same pid."""


class NotFoundError(IodeepError):
    """Lookup of an unregistered pid, session, or ref."""


class ParseError(IodeepError):
    """Raw entity could not be parsed into text/structure."""


class GatewayError(IodeepError):
    """Model gateway transport, timeout, or schema failure."""

    def __init__(self, message: str, raw_output: str | None = None):
        super().__init__(message)
        self.raw_output = raw_output


class IndexBuildError(IodeepError):
    """Heterogeneous index build hit a dangling or inconsistent ref."""


class QueryError(IodeepError):
    """Malformed retrieval query."""


class DatasetError(IodeepError):
    """Benchmark dataset file violates its schema."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        detail = message
        if line is not None:
            detail = f"line {line}: {detail}"
        if field is not None:
            detail = f"{detail} (field {field!r})"
        super().__init__(detail)
        self.line = line
        self.field = field
