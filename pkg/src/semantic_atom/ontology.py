"""Structural OWL subset, class-set similarity, and the annotation registry.

Only three constructs are read from RDF/XML: class declarations,
``rdfs:subClassOf`` between named classes, and object properties with
``rdfs:domain`` / ``rdfs:range``. Everything else is skipped silently.
"""

from __future__ import annotations

import logging
import os
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable
from urllib.parse import urldefrag, urljoin

from ._fs import atomic_write, fsync_dir, iri_key
from .atomxml import XML_NS, Node, parse_xml, write_xml
from .errors import OntologyError, RegistryError, XmlParseError
from .model import AtomFeed, is_absolute_iri, now_rfc3339

log = logging.getLogger(__name__)

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
OWL_THING = OWL + "Thing"

_CLASS_TYPES = {(OWL, "Class"), (RDFS, "Class")}
_PROPERTY_TYPES = {(OWL, "ObjectProperty")}


@dataclass(frozen=True)
class OntologyDoc:
    iri: str
    classes: frozenset[str] = frozenset()
    subclass_edges: frozenset[tuple[str, str]] = frozenset()
    object_properties: frozenset[tuple[str, str, str]] = frozenset()

    def __post_init__(self) -> None:
        for name in ("classes", "subclass_edges", "object_properties"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        for sub, sup in self.subclass_edges:
            for end in (sub, sup):
                if end not in self.classes:
                    raise OntologyError(f"subclass edge {sub} -> {sup} references undeclared class {end}")
        cycle = _find_cycle(self.subclass_edges)
        if cycle:
            raise OntologyError("cyclic subclass graph: " + " -> ".join(cycle))


def _find_cycle(edges: Iterable[tuple[str, str]]) -> list[str] | None:
    graph: dict[str, list[str]] = {}
    for sub, sup in edges:
        graph.setdefault(sub, []).append(sup)
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    for start in sorted(graph):
        if state.get(start):
            continue
        path = [start]
        iters = [iter(graph.get(start, ()))]
        state[start] = 1
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                state[path.pop()] = 2
                iters.pop()
            elif state.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            elif not state.get(nxt):
                state[nxt] = 1
                path.append(nxt)
                iters.append(iter(graph.get(nxt, ())))
    return None


# ---------------------------------------------------------------------------
# RDF/XML subset
# ---------------------------------------------------------------------------


class _Collector:
    def __init__(self, base: str) -> None:
        self.base = base
        self.classes: set[str] = set()
        self.edges: set[tuple[str, str]] = set()
        self.properties: set[tuple[str, str, str]] = set()

    def resolve(self, node: Node, attr: str) -> str | None:
        base = self.base
        if f"{{{XML_NS}}}base" in node.attrs:
            base = urljoin(base, node.attrs[f"{{{XML_NS}}}base"])
        value = node.attrs.get(f"{{{RDF}}}{attr}")
        if value is not None:
            return urljoin(base, value)
        if attr == "about" and f"{{{RDF}}}ID" in node.attrs:
            return urldefrag(base)[0] + "#" + node.attrs[f"{{{RDF}}}ID"]
        return None

    def types(self, node: Node) -> set[tuple[str, str]]:
        found = {(node.ns, node.local)}
        for child in node.find(RDF, "type"):
            ref = self.resolve(child, "resource")
            if ref:
                ns, _, local = ref.rpartition("#")
                found.add((ns + "#", local))
        return found

    def object_ref(self, prop: Node) -> str | None:
        """Target of a property element: rdf:resource or a nested named node."""
        ref = self.resolve(prop, "resource")
        if ref is not None:
            return ref
        for child in prop.children:
            iri = self.node(child)
            if iri is not None:
                return iri
        return None

    def node(self, node: Node) -> str | None:
        """Record one node element; returns its IRI when it names a class."""
        iri = self.resolve(node, "about")
        kinds = self.types(node)
        if kinds & _CLASS_TYPES:
            if iri is None:
                return None  # anonymous class expression
            self.classes.add(iri)
            for sup in node.find(RDFS, "subClassOf"):
                target = self.object_ref(sup)
                if target is not None and target != OWL_THING:
                    self.edges.add((iri, target))
            return iri
        if kinds & _PROPERTY_TYPES and iri is not None:
            domains = [d for d in map(self.object_ref, node.find(RDFS, "domain")) if d]
            ranges = [r for r in map(self.object_ref, node.find(RDFS, "range")) if r]
            for d in domains:
                for r in ranges:
                    self.properties.add((iri, d, r))
        return None


def parse_ontology(doc: bytes | str, iri: str) -> OntologyDoc:
    try:
        root = parse_xml(doc)
    except XmlParseError as exc:
        raise OntologyError(f"ontology {iri} is not well-formed: {exc}") from None
    if (root.ns, root.local) != (RDF, "RDF"):
        raise OntologyError(f"ontology {iri}: root element must be rdf:RDF")
    base = root.attrs.get(f"{{{XML_NS}}}base", iri)
    collector = _Collector(base)
    for child in root.children:
        collector.node(child)
    return OntologyDoc(iri, collector.classes, collector.edges, collector.properties)


def _rdf(ns: str, local: str, attrs: dict[str, str] | None = None, children=None) -> Node:
    return Node(ns, local, dict(attrs or {}), children=list(children or []))


def serialize_ontology(doc: OntologyDoc) -> bytes:
    """RDF/XML rendering that :func:`parse_ontology` reads back unchanged."""
    supers: dict[str, list[str]] = {}
    for sub, sup in doc.subclass_edges:
        supers.setdefault(sub, []).append(sup)
    kids = [_rdf(OWL, "Ontology", {f"{{{RDF}}}about": doc.iri})]
    for cls in sorted(doc.classes):
        edges = [_rdf(RDFS, "subClassOf", {f"{{{RDF}}}resource": s}) for s in sorted(supers.get(cls, ()))]
        kids.append(_rdf(OWL, "Class", {f"{{{RDF}}}about": cls}, edges))
    for prop, dom, rng in sorted(doc.object_properties):
        kids.append(
            _rdf(OWL, "ObjectProperty", {f"{{{RDF}}}about": prop}, [
                _rdf(RDFS, "domain", {f"{{{RDF}}}resource": dom}),
                _rdf(RDFS, "range", {f"{{{RDF}}}resource": rng}),
            ])
        )
    root = _rdf(RDF, "RDF", children=kids)
    root.text = "\n  "
    for k in kids:
        k.tail = "\n  "
    kids[-1].tail = "\n"
    return write_xml(root, {RDF: "rdf", RDFS: "rdfs", OWL: "owl"}, default_namespace=False)


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------


def superclass_closure(doc: OntologyDoc) -> frozenset[str]:
    up: dict[str, list[str]] = {}
    for sub, sup in doc.subclass_edges:
        up.setdefault(sub, []).append(sup)
    seen = set(doc.classes)
    queue = deque(doc.classes)
    while queue:
        for sup in up.get(queue.popleft(), ()):
            if sup not in seen:
                seen.add(sup)
                queue.append(sup)
    return frozenset(seen)


def similarity(a: OntologyDoc, b: OntologyDoc) -> float:
    """Jaccard index of the two superclass closures (0.0 when both are empty)."""
    ca, cb = superclass_closure(a), superclass_closure(b)
    union = len(ca | cb)
    return len(ca & cb) / union if union else 0.0


def class_iri(source_id: str) -> str:
    return source_id + "#class"


def derive_blog_ontology(feed: AtomFeed) -> OntologyDoc:
    """The blog as a class family: the feed is the parent class, each entry a subclass."""
    topic = class_iri(feed.id)
    posted_on = feed.id + "#postedOn"
    members = [class_iri(e.id) for e in feed.entries]
    return OntologyDoc(
        iri=feed.id + "#ontology",
        classes=frozenset([topic, *members]),
        subclass_edges=frozenset((m, topic) for m in members),
        object_properties=frozenset((posted_on, m, topic) for m in members),
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationRecord:
    entry_iri: str
    ontology_iri: str
    registered_at: str = field(default_factory=now_rfc3339)


class OntologyCache:
    """Local copies of ontology documents, keyed by IRI.

    Stands in for network resolution of ``OfflineAtURL`` annotations.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def path_for(self, iri: str) -> Path:
        return self.root / f"{iri_key(iri)}.owl"

    def get(self, iri: str) -> bytes | None:
        try:
            return self.path_for(iri).read_bytes()
        except FileNotFoundError:
            return None

    def put(self, iri: str, data: bytes) -> Path:
        path = self.path_for(iri)
        atomic_write(path, data)
        return path


class OntologyRegistry:
    """Persistent mapping of entry IRIs to the ontologies annotating them.

    Rows live in ``annotations.log`` (tab-separated, append-only, replayed
    on open); ontology documents are stored under ``ontologies/`` by IRI
    hash. One writing process per registry directory.
    """

    LOG_NAME = "annotations.log"

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._docs_dir = self.root / "ontologies"
        self._docs_dir.mkdir(parents=True, exist_ok=True)
        self._log_path = self.root / self.LOG_NAME
        self._lock = threading.Lock()
        self._records: list[AnnotationRecord] = []
        self._pairs: set[tuple[str, str]] = set()
        self._docs: dict[str, OntologyDoc] = {}
        self._replay()

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        data = self._log_path.read_bytes()
        if data and not data.endswith(b"\n"):
            # The last append never completed; drop it so the next append
            # does not glue onto a partial line.
            cut = data.rfind(b"\n") + 1
            log.warning("dropping torn registry record at byte %d", cut)
            with open(self._log_path, "r+b") as fh:
                fh.truncate(cut)
                os.fsync(fh.fileno())
            data = data[:cut]
        for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
            parts = line.split("\t")
            if len(parts) != 3:
                log.warning("skipping malformed registry line %d", lineno)
                continue
            self._add(AnnotationRecord(*parts))

    def _add(self, record: AnnotationRecord) -> None:
        self._records.append(record)
        self._pairs.add((record.entry_iri, record.ontology_iri))

    def _doc_path(self, iri: str) -> Path:
        return self._docs_dir / f"{iri_key(iri)}.owl"

    def register(self, record: AnnotationRecord, doc: OntologyDoc) -> None:
        if doc.iri != record.ontology_iri:
            raise RegistryError(f"ontology IRI {doc.iri!r} does not match record {record.ontology_iri!r}")
        for iri in (record.entry_iri, record.ontology_iri):
            if not is_absolute_iri(iri):
                raise RegistryError(f"not an absolute IRI: {iri!r}")
        with self._lock:
            if self.ontology(doc.iri) != doc:
                atomic_write(self._doc_path(doc.iri), serialize_ontology(doc))
                self._docs[doc.iri] = doc
            if (record.entry_iri, record.ontology_iri) in self._pairs:
                return
            line = f"{record.entry_iri}\t{record.ontology_iri}\t{record.registered_at}\n"
            try:
                with open(self._log_path, "ab") as fh:
                    fh.write(line.encode("utf-8"))
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise RegistryError(f"could not persist registry record: {exc}") from exc
            fsync_dir(self.root)
            self._add(record)

    def ontology(self, iri: str) -> OntologyDoc | None:
        doc = self._docs.get(iri)
        if doc is None:
            path = self._doc_path(iri)
            if not path.exists():
                return None
            doc = parse_ontology(path.read_bytes(), iri)
            self._docs[iri] = doc
        return doc

    def records(self) -> list[AnnotationRecord]:
        return list(self._records)

    def lookup(self, entry_iri: str) -> list[str]:
        """Ontology IRIs annotating an entry, in registration order."""
        return [r.ontology_iri for r in self._records if r.entry_iri == entry_iri]

    def annotated_entries(self) -> list[str]:
        return list(dict.fromkeys(r.entry_iri for r in self._records))

    def __len__(self) -> int:
        return len(self._records)
