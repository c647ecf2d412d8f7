"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DgragError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DgragError):
    """Configuration file could not be parsed or violates invariants."""


class ExtractionError(DgragError):
    """Malformed extraction annotation in a text chunk."""

    def __init__(self, message: str, offset: int | None = None, chunk_id: str | None = None):
        self.offset = offset
        self.chunk_id = chunk_id
        detail = message
        if offset is not None:
            detail += f" (byte offset {offset})"
        if chunk_id is not None:
            detail += f" [chunk {chunk_id}]"
        super().__init__(detail)


class DanglingReferenceError(DgragError):
    """A relation references an entity name that was never extracted."""

    def __init__(self, names: list[str]):
        self.names = sorted(set(names))
        super().__init__("relation endpoints not found: " + ", ".join(self.names))


class EmptyInputError(DgragError):
    """An operation that requires content received an empty input."""


class ProviderError(DgragError):
    """Base class for model-provider failures."""


class ProviderTransportError(ProviderError):
    """HTTP provider could not reach its endpoint after retrying."""

    def __init__(self, message: str, attempts: int):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempts)")


class JudgingError(ProviderError):
    """A judge response could not be parsed into the expected shape."""


class UnsupportedCapabilityError(ProviderError):
    """The configured provider does not support the requested operation."""


class StoreError(DgragError):
    """Vector/graph store integrity violation."""


class StoreFormatError(StoreError):
    """Persisted store has a bad version, checksum, or layout."""


class TransportError(DgragError):
    """Message framing or delivery failure."""


class FrameError(TransportError):
    """Frame is truncated, has a bad version, or fails validation."""


class RoutingError(DgragError):
    """A global query could not be served by any edge."""
