"""Atom/AtomPub toolkit with semantic annotation, taxonomy categorization and
ontology-backed retrieval."""

from .atomxml import parse_entry, parse_feed, serialize_entry, serialize_feed
from .model import (
    DEFAULT_EXTENSION_NS,
    AtomCategory,
    AtomContent,
    AtomEntry,
    AtomFeed,
    AtomLink,
    AtomPerson,
    ExtensionElement,
    SemanticsExtension,
    TextConstruct,
    attach_category,
    attach_semantics,
    new_entry,
    validate_entry,
    validate_feed,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_EXTENSION_NS",
    "AtomCategory",
    "AtomContent",
    "AtomEntry",
    "AtomFeed",
    "AtomLink",
    "AtomPerson",
    "ExtensionElement",
    "SemanticsExtension",
    "TextConstruct",
    "attach_category",
    "attach_semantics",
    "new_entry",
    "parse_entry",
    "parse_feed",
    "serialize_entry",
    "serialize_feed",
    "validate_entry",
    "validate_feed",
]
