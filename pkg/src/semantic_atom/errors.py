"""Exception hierarchy shared by every layer of the toolkit."""

from __future__ import annotations


class AtomError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AtomError):
    """A model value breaks one or more validity rules."""

    def __init__(self, message: str, violations: list | None = None) -> None:
        super().__init__(message)
        self.violations = list(violations or [])


class XmlParseError(AtomError):
    """Input is not well-formed XML."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaError(AtomError):
    """Well-formed XML that does not match the expected Atom structure."""

    def __init__(self, message: str, element: str | None = None) -> None:
        super().__init__(message)
        self.element = element


class TaxonomyError(AtomError):
    """Malformed taxonomy code or scheme data."""


class OntologyError(AtomError):
    """Ontology document is unusable (malformed, cyclic, dangling edge)."""


class StoreError(AtomError):
    """Base class for blog store failures."""


class NotFound(StoreError):
    pass


class Conflict(StoreError):
    """Write clashes with stored state (e.g. duplicate member id)."""


class EtagMismatch(Conflict):
    """Optimistic concurrency check failed: the caller's etag is stale."""


class UnsupportedMediaType(StoreError):
    pass


class InvalidPageToken(StoreError):
    pass


class RegistryError(AtomError):
    pass


class QueryError(AtomError):
    pass
