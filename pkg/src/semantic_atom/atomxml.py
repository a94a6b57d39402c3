"""Atom XML parsing and canonical serialization.

Parsing goes through pyexpat directly so errors carry a byte offset and DTDs
can be refused outright. Serialization is hand-written rather than delegated
to ElementTree: child order, prefixes and namespace declarations have to be
deterministic so that stored documents hash to stable etags.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable
from xml.parsers import expat

from .errors import SchemaError, ValidationError, XmlParseError
from .model import (
    ATOM_NS,
    DEFAULT_EXTENSION_NS,
    SEMANTICS_LOCAL_NAME,
    XHTML_NS,
    AtomCategory,
    AtomContent,
    AtomEntry,
    AtomFeed,
    AtomLink,
    AtomPerson,
    ExtensionElement,
    TextConstruct,
    errors_only,
    validate_entry,
    validate_feed,
)

XML_NS = "http://www.w3.org/XML/1998/namespace"
ENTRY_MEDIA_TYPE = "application/atom+xml;type=entry"
FEED_MEDIA_TYPE = "application/atom+xml;type=feed"

MAX_DEPTH = 256
DEFAULT_PREFIXES = {DEFAULT_EXTENSION_NS: "svnit", XHTML_NS: "xhtml"}

_INVALID_XML_CHARS = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff￾￿]")


# ---------------------------------------------------------------------------
# Generic element tree
# ---------------------------------------------------------------------------


@dataclass
class Node:
    ns: str
    local: str
    attrs: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list[Node] = field(default_factory=list)
    tail: str = ""

    def find(self, ns: str, local: str) -> list[Node]:
        return [c for c in self.children if c.ns == ns and c.local == local]


def _split(name: str) -> tuple[str, str]:
    ns, sep, local = name.rpartition(" ")
    return (ns, local) if sep else ("", name)


def _attr_key(name: str) -> str:
    ns, local = _split(name)
    return f"{{{ns}}}{local}" if ns else local


def _refuse_dtd(*_args) -> None:
    raise XmlParseError("DTD declarations are not accepted")


def parse_xml(data: bytes | str) -> Node:
    """Parse a document into a :class:`Node` tree (namespace aware)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    parser = expat.ParserCreate(namespace_separator=" ")
    parser.buffer_text = True
    stack: list[Node] = []
    holder: list[Node] = []

    def start(name, attrs):
        if len(stack) >= MAX_DEPTH:
            raise XmlParseError(f"element nesting deeper than {MAX_DEPTH}")
        ns, local = _split(name)
        node = Node(ns, local, {_attr_key(k): v for k, v in attrs.items()})
        if stack:
            stack[-1].children.append(node)
        else:
            holder.append(node)
        stack.append(node)

    def end(_name):
        stack.pop()

    def chars(data):
        if not stack:
            return
        top = stack[-1]
        if top.children:
            top.children[-1].tail += data
        else:
            top.text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    parser.StartDoctypeDeclHandler = _refuse_dtd
    parser.EntityDeclHandler = _refuse_dtd
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise XmlParseError(f"malformed XML: {expat.ErrorString(exc.code)}", parser.ErrorByteIndex) from None
    except XmlParseError as exc:
        raise XmlParseError(str(exc), parser.CurrentByteIndex) from None
    except (ValueError, LookupError, UnicodeError) as exc:
        raise XmlParseError(f"unreadable XML: {exc}", parser.ErrorByteIndex) from None
    if not holder:
        raise XmlParseError("document has no root element", 0)
    return holder[0]


# ---------------------------------------------------------------------------
# Writer
# ---------------------------------------------------------------------------


def _check_chars(value: str) -> str:
    m = _INVALID_XML_CHARS.search(value)
    if m:
        raise ValidationError(f"character U+{ord(m.group()):04X} cannot appear in XML")
    return value


def _esc_text(value: str) -> str:
    _check_chars(value)
    return value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace("\r", "&#13;")


def _esc_attr(value: str) -> str:
    return (
        _esc_text(value)
        .replace('"', "&quot;")
        .replace("\n", "&#10;")
        .replace("\t", "&#9;")
    )


def _collect_namespaces(node: Node, elements: list[str], attributes: list[str]) -> None:
    if node.ns and node.ns not in elements:
        elements.append(node.ns)
    for key in node.attrs:
        ns = key[1:].partition("}")[0] if key.startswith("{") else ""
        if ns and ns != XML_NS and ns not in attributes:
            attributes.append(ns)
    for child in node.children:
        _collect_namespaces(child, elements, attributes)


def _assign_prefixes(
    elements: Iterable[str], attributes: Iterable[str], default_ns: str, preferred: dict[str, str]
) -> dict[str, str]:
    # Attributes never take the default namespace, so a namespace used on
    # attributes needs a prefix even when it is also the default.
    prefixes: dict[str, str] = {}
    taken = {"xml", "xmlns"}
    attributes = list(attributes)
    for ns in list(elements) + attributes:
        if ns in prefixes or (ns == default_ns and ns not in attributes):
            continue
        prefix = preferred.get(ns)
        if prefix is None or prefix in taken:
            n = 1
            while f"ns{n}" in taken:
                n += 1
            prefix = f"ns{n}"
        prefixes[ns] = prefix
        taken.add(prefix)
    return prefixes


def _write(node: Node, out: list[str], prefixes: dict[str, str], default_ns: str, decls: list[str]) -> None:
    attrs = list(decls)
    if node.ns == default_ns:  # also covers unqualified elements under no default
        name = node.local
    elif node.ns == "":
        name = node.local
        attrs.append('xmlns=""')
        default_ns = ""
    elif node.ns in prefixes:
        name = f"{prefixes[node.ns]}:{node.local}"
    else:
        name = node.local
        attrs.append(f'xmlns="{_esc_attr(node.ns)}"')
        default_ns = node.ns
    for key, value in node.attrs.items():
        if key.startswith("{"):
            ns, _, local = key[1:].partition("}")
            key = f"xml:{local}" if ns == XML_NS else f"{prefixes[ns]}:{local}"
        attrs.append(f'{key}="{_esc_attr(value)}"')
    out.append("<" + " ".join([name] + attrs))
    if not node.text and not node.children:
        out.append("/>")
    else:
        out.append(">")
        out.append(_esc_text(node.text))
        for child in node.children:
            _write(child, out, prefixes, default_ns, [])
        out.append(f"</{name}>")
    out.append(_esc_text(node.tail))


def write_xml(
    root: Node,
    preferred: dict[str, str] | None = None,
    declaration: bool = True,
    default_namespace: bool = True,
) -> bytes:
    """Serialize a tree, declaring every namespace on the root element.

    With ``default_namespace`` the root's namespace is declared as the
    default; otherwise every namespaced element gets a prefix.
    """
    elements: list[str] = []
    attributes: list[str] = []
    _collect_namespaces(root, elements, attributes)
    default_ns = root.ns if default_namespace else ""
    preferred = {ATOM_NS: "atom", **DEFAULT_PREFIXES, **(preferred or {})}
    prefixes = _assign_prefixes(elements, attributes, default_ns, preferred)
    decls = [f'xmlns="{_esc_attr(default_ns)}"'] if default_ns else []
    decls += [f'xmlns:{p}="{_esc_attr(ns)}"' for ns, p in prefixes.items()]
    out: list[str] = ['<?xml version="1.0" encoding="UTF-8"?>\n'] if declaration else []
    tail, root.tail = root.tail, ""
    try:
        _write(root, out, prefixes, default_ns, decls)
    finally:
        root.tail = tail
    return "".join(out).encode("utf-8")


def _fragment(node: Node) -> str:
    return write_xml(node, declaration=False).decode("utf-8")


# ---------------------------------------------------------------------------
# Node -> model
# ---------------------------------------------------------------------------


def _single(node: Node, local: str) -> Node | None:
    found = node.find(ATOM_NS, local)
    if len(found) > 1:
        raise SchemaError(f"element {local!r} appears more than once", local)
    return found[0] if found else None


def _text_construct(node: Node) -> TextConstruct:
    kind = node.attrs.get("type", "text")
    if kind == "xhtml":
        divs = [c for c in node.children if c.ns == XHTML_NS and c.local == "div"]
        if len(divs) != 1 or len(node.children) != 1:
            raise SchemaError(f"xhtml {node.local} must contain exactly one xhtml:div", node.local)
        div = divs[0]
        return TextConstruct(_fragment(Node(div.ns, div.local, div.attrs, div.text, div.children)), "xhtml")
    if node.children:
        raise SchemaError(f"{kind} construct {node.local!r} must not contain child elements", node.local)
    return TextConstruct(node.text, kind)


def _person(node: Node) -> AtomPerson:
    def child_text(local):
        found = _single(node, local)
        return found.text.strip() if found is not None else None

    return AtomPerson(name=child_text("name") or "", uri=child_text("uri"), email=child_text("email"))


def _rest(attrs: dict[str, str], known: tuple[str, ...]) -> dict[str, str]:
    return {k: v for k, v in attrs.items() if k not in known}


def _category(node: Node) -> AtomCategory:
    a = node.attrs
    return AtomCategory(a.get("term", ""), a.get("scheme"), a.get("label"), _rest(a, ("term", "scheme", "label")))


def _link(node: Node) -> AtomLink:
    a = node.attrs
    return AtomLink(a.get("href", ""), a.get("rel"), a.get("type"), _rest(a, ("href", "rel", "type")))


def _content(node: Node) -> AtomContent:
    kind = node.attrs.get("type")
    src = node.attrs.get("src")
    if src is not None:
        if node.children:
            raise SchemaError("out-of-line content must be empty", "content")
        return AtomContent("out-of-line", body=node.text if node.text.strip() else None, src=src, media_type=kind)
    if kind in (None, "text", "html", "xhtml"):
        tc = _text_construct(node)
        return AtomContent(tc.type, body=tc.text)
    if node.children:
        raise SchemaError(f"inline XML content of type {kind!r} is not supported", "content")
    return AtomContent("text", body=node.text, media_type=kind)


def _extension(node: Node, extension_ns: str, top: bool) -> ExtensionElement:
    text = node.text
    if node.ns == extension_ns and node.local == SEMANTICS_LOCAL_NAME:
        text = text.strip()
    return ExtensionElement(
        namespace_iri=node.ns,
        local_name=node.local,
        attributes=dict(node.attrs),
        text=text or None,
        children=tuple(_extension(c, extension_ns, False) for c in node.children),
        tail=None if top else (node.tail or None),
    )


def _require(node: Node, local: str) -> Node:
    found = _single(node, local)
    if found is None:
        raise SchemaError(f"required element {local!r} is missing", local)
    return found


def _entry_from_node(node: Node, extension_ns: str, lenient: bool = False) -> AtomEntry:
    handled = {"id", "title", "updated", "published", "author", "contributor",
               "category", "link", "content", "summary", "rights"}
    id_node = _single(node, "id") if lenient else _require(node, "id")
    updated_node = _single(node, "updated") if lenient else _require(node, "updated")
    published = _single(node, "published")
    content = _single(node, "content")
    summary = _single(node, "summary")
    rights = _single(node, "rights")
    return AtomEntry(
        id=id_node.text.strip() if id_node is not None else "",
        title=_text_construct(_require(node, "title")),
        updated=updated_node.text.strip() if updated_node is not None else "",
        published=published.text.strip() if published is not None else None,
        authors=tuple(_person(n) for n in node.find(ATOM_NS, "author")),
        contributors=tuple(_person(n) for n in node.find(ATOM_NS, "contributor")),
        categories=tuple(_category(n) for n in node.find(ATOM_NS, "category")),
        links=tuple(_link(n) for n in node.find(ATOM_NS, "link")),
        content=_content(content) if content is not None else None,
        summary=_text_construct(summary) if summary is not None else None,
        rights=_text_construct(rights) if rights is not None else None,
        extensions=tuple(
            _extension(c, extension_ns, True)
            for c in node.children
            if not (c.ns == ATOM_NS and c.local in handled)
        ),
        attributes=dict(node.attrs),
    )


def _check_root(node: Node, local: str) -> None:
    if node.ns != ATOM_NS or node.local != local:
        raise SchemaError(
            f"expected root element {{{ATOM_NS}}}{local}, got {{{node.ns}}}{node.local}", local
        )


def parse_entry(doc: bytes | str, extension_ns: str = DEFAULT_EXTENSION_NS, lenient: bool = False) -> AtomEntry:
    """Parse an Atom entry document.

    With ``lenient`` a missing ``id`` / ``updated`` yields an empty string
    instead of a :class:`SchemaError`; servers use this to fill them in.
    """
    node = parse_xml(doc)
    _check_root(node, "entry")
    return _entry_from_node(node, extension_ns, lenient)


def parse_feed(doc: bytes | str, extension_ns: str = DEFAULT_EXTENSION_NS) -> AtomFeed:
    node = parse_xml(doc)
    _check_root(node, "feed")
    handled = {"id", "title", "subtitle", "updated", "author", "category", "link", "entry"}
    subtitle = _single(node, "subtitle")
    return AtomFeed(
        id=_require(node, "id").text.strip(),
        title=_text_construct(_require(node, "title")),
        updated=_require(node, "updated").text.strip(),
        authors=tuple(_person(n) for n in node.find(ATOM_NS, "author")),
        categories=tuple(_category(n) for n in node.find(ATOM_NS, "category")),
        links=tuple(_link(n) for n in node.find(ATOM_NS, "link")),
        subtitle=_text_construct(subtitle) if subtitle is not None else None,
        entries=tuple(_entry_from_node(n, extension_ns) for n in node.find(ATOM_NS, "entry")),
        extensions=tuple(
            _extension(c, extension_ns, True)
            for c in node.children
            if not (c.ns == ATOM_NS and c.local in handled)
        ),
        attributes=dict(node.attrs),
    )


# ---------------------------------------------------------------------------
# Model -> node
# ---------------------------------------------------------------------------


def _atom(local: str, attrs: dict[str, str] | None = None, text: str = "", children=None) -> Node:
    return Node(ATOM_NS, local, dict(attrs or {}), text, list(children or []))


def _text_node(local: str, tc: TextConstruct) -> Node:
    if tc.type == "xhtml":
        try:
            div = parse_xml(tc.text)
        except XmlParseError as exc:
            raise ValidationError(f"{local}: xhtml body is not well-formed: {exc}") from None
        return _atom(local, {"type": "xhtml"}, children=[div])
    return _atom(local, {"type": tc.type}, tc.text)


def _person_node(local: str, p: AtomPerson) -> Node:
    kids = [_atom("name", text=p.name)]
    if p.uri is not None:
        kids.append(_atom("uri", text=p.uri))
    if p.email is not None:
        kids.append(_atom("email", text=p.email))
    return _atom(local, children=kids)


def _category_node(c: AtomCategory) -> Node:
    attrs = {"term": c.term}
    if c.scheme is not None:
        attrs["scheme"] = c.scheme
    if c.label is not None:
        attrs["label"] = c.label
    return _atom("category", {**attrs, **c.attributes})


def _link_node(link: AtomLink) -> Node:
    attrs = {"href": link.href}
    if link.rel is not None:
        attrs["rel"] = link.rel
    if link.type is not None:
        attrs["type"] = link.type
    return _atom("link", {**attrs, **link.attributes})


def _content_node(c: AtomContent) -> Node:
    if c.kind == "out-of-line":
        attrs = {"src": c.src or ""}
        if c.media_type is not None:
            attrs = {"type": c.media_type, **attrs}
        return _atom("content", attrs)
    if c.kind == "xhtml":
        return _text_node("content", TextConstruct(c.body or "", "xhtml"))
    return _atom("content", {"type": c.media_type or c.kind}, c.body or "")


def _extension_node(e: ExtensionElement) -> Node:
    return Node(
        e.namespace_iri,
        e.local_name,
        dict(e.attributes),
        e.text or "",
        [_extension_node(c) for c in e.children],
        e.tail or "",
    )


def _entry_node(entry: AtomEntry) -> Node:
    kids = [_atom("id", text=entry.id), _text_node("title", entry.title), _atom("updated", text=entry.updated)]
    if entry.published is not None:
        kids.append(_atom("published", text=entry.published))
    kids += [_person_node("author", p) for p in entry.authors]
    kids += [_person_node("contributor", p) for p in entry.contributors]
    kids += [_category_node(c) for c in entry.categories]
    kids += [_link_node(link) for link in entry.links]
    if entry.content is not None:
        kids.append(_content_node(entry.content))
    if entry.summary is not None:
        kids.append(_text_node("summary", entry.summary))
    if entry.rights is not None:
        kids.append(_text_node("rights", entry.rights))
    kids += [_extension_node(e) for e in entry.extensions]
    return _layout(_atom("entry", entry.attributes, children=kids), "")


def _layout(node: Node, indent: str) -> Node:
    """Put each direct child on its own line. Only Atom structure is touched."""
    inner = indent + "  "
    node.text = "\n" + inner
    for child in node.children:
        child.tail = "\n" + inner
        if child.ns == ATOM_NS and child.local in ("author", "contributor"):
            child.text = " "
            for grandchild in child.children:
                grandchild.tail = " "
    if node.children:
        node.children[-1].tail = "\n" + indent
    return node


def serialize_entry(
    entry: AtomEntry,
    extension_ns: str = DEFAULT_EXTENSION_NS,
    prefixes: dict[str, str] | None = None,
) -> bytes:
    """Canonical bytes for a valid entry; refuses invalid input."""
    errors = errors_only(validate_entry(entry, extension_ns))
    if errors:
        raise ValidationError("; ".join(map(str, errors)), errors)
    return write_xml(_entry_node(entry), {extension_ns: "svnit", **(prefixes or {})})


def serialize_feed(
    feed: AtomFeed,
    extension_ns: str = DEFAULT_EXTENSION_NS,
    prefixes: dict[str, str] | None = None,
) -> bytes:
    errors = errors_only(validate_feed(feed, extension_ns))
    if errors:
        raise ValidationError("; ".join(map(str, errors)), errors)
    kids = [_atom("id", text=feed.id), _text_node("title", feed.title)]
    if feed.subtitle is not None:
        kids.append(_text_node("subtitle", feed.subtitle))
    kids.append(_atom("updated", text=feed.updated))
    kids += [_person_node("author", p) for p in feed.authors]
    kids += [_category_node(c) for c in feed.categories]
    kids += [_link_node(link) for link in feed.links]
    kids += [_extension_node(e) for e in feed.extensions]
    entries = [_entry_node(e) for e in feed.entries]
    for e in entries:
        _layout(e, "  ")
    root = _layout(_atom("feed", feed.attributes, children=kids + entries), "")
    return write_xml(root, {extension_ns: "svnit", **(prefixes or {})})
