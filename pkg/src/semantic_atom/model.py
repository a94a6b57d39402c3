"""In-memory Atom entry/feed model with the semantic annotation extension.

All types are frozen dataclasses; the ``attach_*`` helpers return new values
instead of mutating. ``validate_entry`` / ``validate_feed`` report rule
violations as data rather than raising.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Iterable

from .errors import ValidationError

ATOM_NS = "http://www.w3.org/2005/Atom"
XHTML_NS = "http://www.w3.org/1999/xhtml"
DEFAULT_EXTENSION_NS = "http://www.svnit.ac.in/coed/mtech/research/2009/khuba/"
SEMANTICS_LOCAL_NAME = "Semantics"
OFFLINE_AT_URL = "OfflineAtURL"
KNOWN_AVAILABILITY = frozenset({OFFLINE_AT_URL})

TEXT_TYPES = ("text", "html", "xhtml")
CONTENT_KINDS = ("text", "html", "xhtml", "out-of-line")

_ABSOLUTE_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:\S+$")
_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt](\d{2}):(\d{2}):(\d{2})(\.\d+)?([Zz]|[+-]\d{2}:\d{2})$"
)


# ---------------------------------------------------------------------------
# Scalar helpers
# ---------------------------------------------------------------------------


def is_absolute_iri(value: str | None) -> bool:
    return bool(value) and _ABSOLUTE_IRI.match(value) is not None


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 date-time into an aware ``datetime``.

    Raises ``ValueError`` for anything that is not a full date-time with an
    explicit offset. A leap second (``:60``) is folded onto the next instant.
    """
    m = _RFC3339.match(value or "")
    if m is None:
        raise ValueError(f"not an RFC 3339 timestamp: {value!r}")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    frac, offset = m.group(7), m.group(8)
    micro = int((frac[1:] + "000000")[:6]) if frac else 0
    if offset in ("Z", "z"):
        tz = timezone.utc
    else:
        sign = 1 if offset[0] == "+" else -1
        hh, mm = int(offset[1:3]), int(offset[4:6])
        if hh > 23 or mm > 59:
            raise ValueError(f"bad UTC offset in {value!r}")
        tz = timezone(sign * timedelta(hours=hh, minutes=mm))
    leap = second == 60
    if second > 60:
        raise ValueError(f"bad seconds field in {value!r}")
    dt = datetime(year, month, day, hour, minute, 59 if leap else second, micro, tzinfo=tz)
    return dt + timedelta(seconds=1) if leap else dt


def is_rfc3339(value: str | None) -> bool:
    try:
        parse_rfc3339(value or "")
    except ValueError:
        return False
    return True


def format_rfc3339(dt: datetime) -> str:
    """Millisecond-precision UTC rendering, e.g. ``2009-08-31T18:55:12.569Z``."""
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def now_rfc3339() -> str:
    return format_rfc3339(datetime.now(timezone.utc))


def new_id() -> str:
    return f"urn:uuid:{uuid.uuid4()}"


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TextConstruct:
    """Atom text construct. For ``xhtml`` the text holds the serialized div."""

    text: str
    type: str = "text"


@dataclass(frozen=True)
class AtomPerson:
    name: str
    uri: str | None = None
    email: str | None = None


@dataclass(frozen=True)
class AtomCategory:
    term: str
    scheme: str | None = None
    label: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class AtomLink:
    href: str
    rel: str | None = None
    type: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class AtomContent:
    """Entry content; exactly one of ``body`` and ``src`` is set.

    ``media_type`` carries the literal ``type`` attribute when it is a MIME
    type rather than one of the text/html/xhtml keywords.
    """

    kind: str
    body: str | None = None
    src: str | None = None
    media_type: str | None = None

    @classmethod
    def text(cls, body: str) -> AtomContent:
        return cls("text", body=body)

    @classmethod
    def html(cls, body: str) -> AtomContent:
        return cls("html", body=body)

    @classmethod
    def out_of_line(cls, src: str, media_type: str | None = None) -> AtomContent:
        return cls("out-of-line", src=src, media_type=media_type)


@dataclass(frozen=True)
class ExtensionElement:
    """Foreign markup kept as a small element tree.

    Attribute keys are local names, or ``{namespace}local`` for namespaced
    attributes. ``tail`` is the character data following the element inside
    its parent, kept so mixed content survives a round trip.
    """

    namespace_iri: str
    local_name: str
    attributes: dict[str, str] = field(default_factory=dict)
    text: str | None = None
    children: tuple[ExtensionElement, ...] = ()
    tail: str | None = None

    def __post_init__(self) -> None:
        # XML cannot tell empty character data from none at all.
        if self.text == "":
            object.__setattr__(self, "text", None)
        if self.tail == "":
            object.__setattr__(self, "tail", None)
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class SemanticsExtension:
    """Binding of entry content to the ontology document that annotates it."""

    ontology_iri: str
    availability: str = OFFLINE_AT_URL
    namespace: str = DEFAULT_EXTENSION_NS

    def to_element(self) -> ExtensionElement:
        return ExtensionElement(
            self.namespace,
            SEMANTICS_LOCAL_NAME,
            {"available": self.availability},
            text=self.ontology_iri,
        )

    @classmethod
    def from_element(cls, element: ExtensionElement) -> SemanticsExtension:
        return cls(
            ontology_iri=(element.text or "").strip(),
            availability=element.attributes.get("available", ""),
            namespace=element.namespace_iri,
        )


def _is_semantics(element: ExtensionElement, namespace: str) -> bool:
    return element.namespace_iri == namespace and element.local_name == SEMANTICS_LOCAL_NAME


@dataclass(frozen=True)
class AtomEntry:
    id: str
    title: TextConstruct
    updated: str
    published: str | None = None
    authors: tuple[AtomPerson, ...] = ()
    contributors: tuple[AtomPerson, ...] = ()
    categories: tuple[AtomCategory, ...] = ()
    links: tuple[AtomLink, ...] = ()
    content: AtomContent | None = None
    summary: TextConstruct | None = None
    rights: TextConstruct | None = None
    extensions: tuple[ExtensionElement, ...] = ()
    attributes: dict[str, str] = field(default_factory=dict)

    def semantics(self, namespace: str = DEFAULT_EXTENSION_NS) -> list[SemanticsExtension]:
        """Semantics annotations carried by this entry, in document order."""
        return [
            SemanticsExtension.from_element(e)
            for e in self.extensions
            if _is_semantics(e, namespace)
        ]


@dataclass(frozen=True)
class AtomFeed:
    id: str
    title: TextConstruct
    updated: str
    authors: tuple[AtomPerson, ...] = ()
    categories: tuple[AtomCategory, ...] = ()
    links: tuple[AtomLink, ...] = ()
    subtitle: TextConstruct | None = None
    entries: tuple[AtomEntry, ...] = ()
    extensions: tuple[ExtensionElement, ...] = ()
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.severity}: {self.field}: {self.message}"


def errors_only(violations: Iterable[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "error"]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def new_entry(
    title: str | TextConstruct,
    content: AtomContent | None = None,
    authors: Iterable[AtomPerson] = (),
) -> AtomEntry:
    """Compose a fresh entry with a ``urn:uuid`` id and ``updated`` = now."""
    if isinstance(title, str):
        title = TextConstruct(title)
    if not title.text:
        raise ValidationError("title must not be empty", [Violation("title", "empty title")])
    return AtomEntry(
        id=new_id(),
        title=title,
        updated=now_rfc3339(),
        authors=tuple(authors),
        content=content,
    )


def attach_category(entry: AtomEntry, category: AtomCategory) -> AtomEntry:
    if not category.term:
        raise ValidationError("category term must not be empty", [Violation("categories", "empty term")])
    key = (category.term, category.scheme)
    if any((c.term, c.scheme) == key for c in entry.categories):
        return entry
    return replace(entry, categories=entry.categories + (category,))


def attach_semantics(entry: AtomEntry, sem: SemanticsExtension) -> AtomEntry:
    if not is_absolute_iri(sem.ontology_iri):
        raise ValidationError(
            f"ontology IRI must be absolute: {sem.ontology_iri!r}",
            [Violation("semantics", "ontology IRI is not absolute")],
        )
    kept = tuple(e for e in entry.extensions if not _is_semantics(e, sem.namespace))
    return replace(entry, extensions=kept + (sem.to_element(),))


def _check_text(name: str, value: TextConstruct | None, required: bool) -> list[Violation]:
    if value is None:
        return [Violation(name, "missing")] if required else []
    out = []
    if value.type not in TEXT_TYPES:
        out.append(Violation(name, f"unknown text type {value.type!r}"))
    if required and not value.text:
        out.append(Violation(name, "empty"))
    return out


def _check_persons(name: str, persons: Iterable[AtomPerson]) -> list[Violation]:
    return [
        Violation(name, f"{name}[{i}] has an empty name")
        for i, p in enumerate(persons)
        if not p.name or not p.name.strip()
    ]


def _check_extension(element: ExtensionElement, top: bool = True) -> list[Violation]:
    # Only top-level foreign markup must be namespaced; nested children may
    # legitimately be unqualified.
    out = []
    if (top and not element.namespace_iri) or not element.local_name:
        out.append(Violation("extensions", f"extension element lacks namespace or name: {element.local_name!r}"))
    for child in element.children:
        out.extend(_check_extension(child, top=False))
    return out


def _check_content(content: AtomContent | None) -> list[Violation]:
    if content is None:
        return []
    out = []
    if content.kind not in CONTENT_KINDS:
        out.append(Violation("content", f"unknown content kind {content.kind!r}"))
    has_body, has_src = content.body is not None, content.src is not None
    if has_body == has_src:
        out.append(Violation("content", "exactly one of body and src must be present"))
    elif (content.kind == "out-of-line") != has_src:
        out.append(Violation("content", "src is required exactly for out-of-line content"))
    if has_src and not content.src:
        out.append(Violation("content", "empty src"))
    return out


def _check_common(obj: AtomEntry | AtomFeed) -> list[Violation]:
    out: list[Violation] = []
    if not is_absolute_iri(obj.id):
        out.append(Violation("id", f"id must be a non-empty absolute IRI, got {obj.id!r}"))
    out.extend(_check_text("title", obj.title, required=True))
    if not is_rfc3339(obj.updated):
        out.append(Violation("updated", f"not an RFC 3339 timestamp: {obj.updated!r}"))
    out.extend(_check_persons("authors", obj.authors))
    for c in obj.categories:
        if not c.term:
            out.append(Violation("categories", "category with empty term"))
        if c.scheme is not None and not is_absolute_iri(c.scheme):
            out.append(Violation("categories", f"scheme is not an absolute IRI: {c.scheme!r}"))
    for link in obj.links:
        if not link.href:
            out.append(Violation("links", "link with empty href"))
    for e in obj.extensions:
        out.extend(_check_extension(e))
    return out


def validate_entry(entry: AtomEntry, extension_ns: str = DEFAULT_EXTENSION_NS) -> list[Violation]:
    """Return every rule the entry breaks; an empty list means valid.

    Unknown Semantics availability values are reported with severity
    ``warning``; everything else is an ``error``.
    """
    out = _check_common(entry)
    if entry.published is not None and not is_rfc3339(entry.published):
        out.append(Violation("published", f"not an RFC 3339 timestamp: {entry.published!r}"))
    out.extend(_check_persons("contributors", entry.contributors))
    out.extend(_check_content(entry.content))
    out.extend(_check_text("summary", entry.summary, required=False))
    out.extend(_check_text("rights", entry.rights, required=False))
    for sem in entry.semantics(extension_ns):
        if not is_absolute_iri(sem.ontology_iri):
            out.append(Violation("semantics", f"ontology IRI is not absolute: {sem.ontology_iri!r}"))
        if sem.availability not in KNOWN_AVAILABILITY:
            out.append(Violation("semantics", f"unknown availability {sem.availability!r}", "warning"))
    return out


def validate_feed(feed: AtomFeed, extension_ns: str = DEFAULT_EXTENSION_NS) -> list[Violation]:
    out = _check_common(feed)
    out.extend(_check_text("subtitle", feed.subtitle, required=False))
    seen: set[str] = set()
    for i, entry in enumerate(feed.entries):
        if entry.id in seen:
            out.append(Violation("entries", f"duplicate entry id {entry.id!r}"))
        seen.add(entry.id)
        for v in validate_entry(entry, extension_ns):
            out.append(Violation(f"entries[{i}].{v.field}", v.message, v.severity))
    return out
