"""Category and similarity queries over the store, and the pages they produce."""

from __future__ import annotations

import html
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import OntologyError, QueryError, TaxonomyError
from .model import AtomFeed
from .ontology import (
    OntologyCache,
    OntologyDoc,
    OntologyRegistry,
    class_iri,
    derive_blog_ontology,
    parse_ontology,
    similarity,
)
from .store import BlogStore
from .taxonomy import TaxonomyScheme, common_level, parse_code, subsumes

CATEGORY_MATCH = "category-match"
SIMILARITY = "similarity"

QUERY_KINDS = ("by-category", "by-ontology", "by-entry")


@dataclass(frozen=True)
class RankedResult:
    entry_iri: str
    member_url: str
    score: float
    basis: str
    title: str = ""


def rank(results: Iterable[RankedResult], limit: int | None = None) -> list[RankedResult]:
    """Score descending, ties by entry id then member URL."""
    out = sorted(results, key=lambda r: (-r.score, r.entry_iri, r.member_url))
    return out if limit is None else out[:limit]


def _member_url(base_url: str, collection: str, key: str) -> str:
    return f"{base_url.rstrip('/')}/{collection}/{key}"


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def query_by_category(
    store: BlogStore,
    scheme: TaxonomyScheme,
    term: str,
    include_subsumed: bool = False,
    limit: int | None = None,
    *,
    scheme_iri: str | None = None,
    base_url: str = "",
) -> list[RankedResult]:
    """Members tagged with ``term``; with ``include_subsumed`` also narrower terms.

    Exact matches score 1.0, narrower ones ``common_level / 4``.
    """
    if scheme_iri is not None and scheme_iri != scheme.scheme_iri:
        raise QueryError(f"unknown scheme {scheme_iri!r}")
    try:
        query = parse_code(term)
    except TaxonomyError as exc:
        raise QueryError(str(exc)) from None
    results = []
    for coll in store.collections():
        for member in store.members(coll.name):
            best = 0.0
            for cat in member.entry.categories:
                if cat.scheme != scheme.scheme_iri:
                    continue
                if cat.term == term:
                    best = 1.0
                    break
                if include_subsumed:
                    try:
                        code = parse_code(cat.term)
                    except TaxonomyError:
                        continue
                    if subsumes(query, code):
                        best = max(best, common_level(query, code) / 4)
            if best > 0:
                results.append(RankedResult(
                    member.entry.id,
                    _member_url(base_url, coll.name, member.key),
                    best,
                    CATEGORY_MATCH,
                    member.entry.title.text,
                ))
    return rank(results, limit)


def _resolve_ontology(
    iri: str, registry: OntologyRegistry, cache: OntologyCache | None
) -> OntologyDoc | None:
    doc = registry.ontology(iri)
    if doc is None and cache is not None:
        data = cache.get(iri)
        if data is not None:
            doc = parse_ontology(data, iri)
    return doc


def _entry_ontologies(entry_iri: str, registry: OntologyRegistry) -> list[OntologyDoc]:
    docs = (registry.ontology(i) for i in registry.lookup(entry_iri))
    return [d for d in docs if d is not None]


def _best(a: list[OntologyDoc], b: list[OntologyDoc]) -> float | None:
    # An entry with several annotations scores by its closest ontology.
    scores = [similarity(x, y) for x, y in itertools.product(a, b)]
    return max(scores) if scores else None


def query_by_semantics(
    registry: OntologyRegistry,
    store: BlogStore,
    *,
    ontology_iri: str | None = None,
    entry_iri: str | None = None,
    min_similarity: float = 0.0,
    limit: int | None = None,
    cache: OntologyCache | None = None,
    base_url: str = "",
) -> list[RankedResult]:
    """Annotated members whose ontologies are at least ``min_similarity`` to the anchor.

    The anchor is either an ontology IRI or an entry IRI; an entry anchor
    resolves through its registry records and is excluded from the results.
    """
    if (ontology_iri is None) == (entry_iri is None):
        raise QueryError("give exactly one of ontology_iri and entry_iri")
    try:
        if entry_iri is not None:
            if not registry.lookup(entry_iri):
                raise QueryError(f"entry {entry_iri!r} has no semantic annotation")
            anchor = _entry_ontologies(entry_iri, registry)
            if not anchor:
                raise QueryError(f"ontologies annotating {entry_iri!r} are not available")
        else:
            doc = _resolve_ontology(ontology_iri, registry, cache)
            if doc is None:
                raise QueryError(f"ontology {ontology_iri!r} is neither registered nor cached")
            anchor = [doc]
    except OntologyError as exc:
        raise QueryError(f"anchor ontology is unusable: {exc}") from None

    results = []
    for candidate in registry.annotated_entries():
        if candidate == entry_iri:
            continue
        score = _best(anchor, _entry_ontologies(candidate, registry))
        if score is None or score < min_similarity:
            continue
        coll = store.locate(candidate)
        if coll is None:
            continue  # annotation outlived its entry
        member = store.read_member(coll, candidate)
        results.append(RankedResult(
            candidate, _member_url(base_url, coll, member.key), score, SIMILARITY, member.entry.title.text
        ))
    return rank(results, limit)


@dataclass(frozen=True)
class Query:
    kind: str
    term: str | None = None
    scheme: str | None = None
    ontology_iri: str | None = None
    entry_iri: str | None = None
    include_subsumed: bool = False
    min_similarity: float = 0.0
    limit: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in QUERY_KINDS:
            raise QueryError(f"unknown query kind {self.kind!r}; expected one of {', '.join(QUERY_KINDS)}")
        wanted = {
            "by-category": {"term"},
            "by-ontology": {"ontology_iri"},
            "by-entry": {"entry_iri"},
        }[self.kind]
        for name in ("term", "ontology_iri", "entry_iri"):
            present = getattr(self, name) is not None
            if present != (name in wanted):
                raise QueryError(f"{self.kind} query {'needs' if not present else 'does not take'} {name}")
        if self.kind != "by-category" and (self.scheme is not None or self.include_subsumed):
            raise QueryError("scheme/include_subsumed only apply to by-category queries")
        if not 0.0 <= self.min_similarity <= 1.0:
            raise QueryError("min_similarity must lie in [0, 1]")
        if self.limit is not None and self.limit < 1:
            raise QueryError("limit must be a positive integer")

    @classmethod
    def from_params(cls, params: Mapping[str, str]) -> Query:
        """Build a query from URL query parameters."""
        def flag(value: str | None) -> bool:
            return (value or "").lower() in ("1", "true", "yes", "on")

        try:
            return cls(
                kind=params.get("kind", ""),
                term=params.get("term"),
                scheme=params.get("scheme"),
                ontology_iri=params.get("ontology_iri"),
                entry_iri=params.get("entry_iri"),
                include_subsumed=flag(params.get("include_subsumed")),
                min_similarity=float(params.get("min_similarity", 0.0)),
                limit=int(params["limit"]) if params.get("limit") else None,
            )
        except ValueError as exc:
            raise QueryError(f"bad query parameter: {exc}") from None


def run_query(
    query: Query,
    store: BlogStore,
    registry: OntologyRegistry,
    scheme: TaxonomyScheme | None,
    cache: OntologyCache | None = None,
    base_url: str = "",
) -> list[RankedResult]:
    if query.kind == "by-category":
        if scheme is None:
            raise QueryError("no taxonomy scheme is configured")
        return query_by_category(
            store, scheme, query.term, query.include_subsumed, query.limit,
            scheme_iri=query.scheme, base_url=base_url,
        )
    return query_by_semantics(
        registry, store,
        ontology_iri=query.ontology_iri, entry_iri=query.entry_iri,
        min_similarity=query.min_similarity, limit=query.limit,
        cache=cache, base_url=base_url,
    )


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def build_aggregation_page(results: Iterable[RankedResult], page_title: str) -> bytes:
    """Static HTML page, one hyperlink per result in rank order."""
    esc = html.escape
    items = [
        f'    <li><a href="{esc(r.member_url)}">{esc(r.title or r.entry_iri)}</a>'
        f' <span class="score">{r.score:.3f}</span>'
        f' <code class="entry-id">{esc(r.entry_iri)}</code></li>'
        for r in results
    ]
    body = ["  <ol class=\"results\">", *items, "  </ol>"] if items else ['  <p class="empty">no matches</p>']
    lines = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '  <meta charset="utf-8">',
        f"  <title>{esc(page_title)}</title>",
        "</head>",
        "<body>",
        f"  <h1>{esc(page_title)}</h1>",
        *body,
        "</body>",
        "</html>",
        "",
    ]
    return "\n".join(lines).encode("utf-8")


def results_tsv(results: Iterable[RankedResult]) -> bytes:
    """One result per line: score, basis, entry IRI, member URL, title."""
    rows = [
        "\t".join([f"{r.score:.6f}", r.basis, r.entry_iri, r.member_url, " ".join(r.title.split())])
        for r in results
    ]
    return "".join(row + "\n" for row in rows).encode("utf-8")


@dataclass(frozen=True)
class RelationGraph:
    topic: str
    nodes: tuple[str, ...]
    topic_edges: tuple[tuple[str, str], ...]
    entry_edges: dict[tuple[str, str], float] = field(default_factory=dict)


def relate_entries(feed: AtomFeed, registry: OntologyRegistry) -> RelationGraph:
    """Topic-to-entry edges from the blog ontology plus similarity-weighted entry pairs.

    Entry pairs are keyed with the smaller id first; an entry with no
    available annotation gets no entry edges.
    """
    family = derive_blog_ontology(feed)
    by_class = {class_iri(e.id): e.id for e in feed.entries}
    topic_edges = tuple(sorted((feed.id, by_class[sub]) for sub, _sup in family.subclass_edges))
    annotated = {e.id: _entry_ontologies(e.id, registry) for e in feed.entries}
    annotated = {k: v for k, v in annotated.items() if v}
    entry_edges = {}
    for a, b in itertools.combinations(sorted(annotated), 2):
        entry_edges[(a, b)] = _best(annotated[a], annotated[b])
    return RelationGraph(
        topic=feed.id,
        nodes=(feed.id, *(e.id for e in feed.entries)),
        topic_edges=topic_edges,
        entry_edges=entry_edges,
    )
