"""Exceptions raised by the superloc library."""

from __future__ import annotations


class SuperlocError(Exception):
    """Base class for all superloc errors."""


class DegenerateGeometryError(SuperlocError):
    """A direction of arrival is undefined because a point sits on a BS."""


class EmptyScenarioError(SuperlocError):
    """A base station has no propagation path to synthesise."""


class InvalidConditionError(SuperlocError):
    """A propagation condition cannot be generated with the given paths."""


class EmptyCandidateError(SuperlocError):
    """The solver returned no atom to extract a location from."""


class ConfigError(SuperlocError):
    """Configuration is malformed or violates an invariant."""

    def __init__(
        self, message: str, field: str | None = None, line: int | None = None
    ) -> None:
        self.field = field
        self.line = line
        parts = [message]
        if field:
            parts.append(f"field: {field}")
        if line is not None:
            parts.append(f"line: {line}")
        super().__init__(" | ".join(parts))


class SchemaError(SuperlocError):
    """A dataset or result file does not match its documented schema."""

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(f"{message} (field: {field})" if field else message)


class DatasetIOError(SuperlocError):
    """A dataset or result file could not be read or written."""
