from html.parser import HTMLParser

import pytest

from semantic_atom.errors import QueryError
from semantic_atom.model import AtomCategory, AtomEntry, AtomFeed, AtomPerson, TextConstruct
from semantic_atom.ontology import AnnotationRecord, OntologyDoc, class_iri
from semantic_atom.retrieval import (
    Query,
    RankedResult,
    build_aggregation_page,
    query_by_category,
    query_by_semantics,
    rank,
    relate_entries,
    results_tsv,
    run_query,
)

from conftest import CAMERA_OWL, CHEM_OWL, FILM_OWL, UNSPSC
from oracles import oracle_common_level

ENTRY_ONTOLOGY = {"urn:e:camera": CAMERA_OWL, "urn:e:film": FILM_OWL, "urn:e:chem": CHEM_OWL}


class Anchors(HTMLParser):
    def __init__(self):
        super().__init__()
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            self.hrefs.append(dict(attrs)["href"])


def anchors(page: bytes) -> list[str]:
    p = Anchors()
    p.feed(page.decode("utf-8"))
    return p.hrefs


def entry(eid: str, *terms: str, scheme: str = UNSPSC) -> AtomEntry:
    return AtomEntry(
        eid, TextConstruct(f"title of {eid}"), "2009-08-31T18:55:12Z",
        authors=(AtomPerson("a"),),
        categories=tuple(AtomCategory(t, scheme) for t in terms),
    )


@pytest.fixture
def annotated(store, registry, ontologies):
    for eid, iri in ENTRY_ONTOLOGY.items():
        store.create_member("blog", entry(eid))
        registry.register(AnnotationRecord(eid, iri), ontologies[iri])
    return store, registry


def test_semantic_query_by_ontology(annotated, cache):
    store, registry = annotated
    results = query_by_semantics(registry, store, ontology_iri=CAMERA_OWL, min_similarity=0.2, cache=cache)
    assert [(r.entry_iri, r.score) for r in results] == [("urn:e:camera", 1.0), ("urn:e:film", 0.25)]
    everything = query_by_semantics(registry, store, ontology_iri=CAMERA_OWL, cache=cache)
    assert [r.score for r in everything] == [1.0, 0.25, 0.0]


def test_semantic_query_by_entry_excludes_anchor(annotated):
    store, registry = annotated
    results = query_by_semantics(registry, store, entry_iri="urn:e:camera", min_similarity=0.2)
    assert [(r.entry_iri, r.score) for r in results] == [("urn:e:film", 0.25)]


def test_semantic_query_errors(annotated):
    store, registry = annotated
    with pytest.raises(QueryError):
        query_by_semantics(registry, store, entry_iri="urn:e:unannotated")
    with pytest.raises(QueryError):
        query_by_semantics(registry, store, ontology_iri="http://example.org/unknown.owl")
    with pytest.raises(QueryError):
        query_by_semantics(registry, store)


def test_deleted_entries_drop_out(annotated):
    store, registry = annotated
    store.delete_member("blog", "urn:e:film")
    results = query_by_semantics(registry, store, ontology_iri=CAMERA_OWL, min_similarity=0.2)
    assert [r.entry_iri for r in results] == ["urn:e:camera"]


def test_best_annotation_wins(annotated, ontologies):
    store, registry = annotated
    registry.register(AnnotationRecord("urn:e:chem", CAMERA_OWL), ontologies[CAMERA_OWL])
    results = query_by_semantics(registry, store, ontology_iri=CAMERA_OWL, min_similarity=0.5)
    assert sorted(r.entry_iri for r in results) == ["urn:e:camera", "urn:e:chem"]


def test_category_query(store, scheme):
    store.create_member("blog", entry("urn:e:1", "45121504"))
    store.create_member("blog", entry("urn:e:2", "45120000"))
    store.create_member("blog", entry("urn:e:3", "12141500"))
    store.create_member("blog", entry("urn:e:4", "45121504", scheme="http://other/"))
    store.create_member("blog", entry("urn:e:5", "not-a-code"))
    exact = query_by_category(store, scheme, "45120000")
    assert [(r.entry_iri, r.score) for r in exact] == [("urn:e:2", 1.0)]
    wide = query_by_category(store, scheme, "45120000", include_subsumed=True)
    assert [(r.entry_iri, r.score) for r in wide] == [("urn:e:2", 1.0), ("urn:e:1", 0.5)]
    assert query_by_category(store, scheme, "45120000", include_subsumed=True, limit=1)[0].entry_iri == "urn:e:2"
    with pytest.raises(QueryError):
        query_by_category(store, scheme, "4512")
    with pytest.raises(QueryError):
        query_by_category(store, scheme, "45120000", scheme_iri="http://other/")


def test_subsumed_query_over_three_entries(store, scheme):
    for eid, term in (("urn:e:a", "45121504"), ("urn:e:b", "45121599"), ("urn:e:c", "12000000")):
        store.create_member("blog", entry(eid, term))
    results = query_by_category(store, scheme, "45120000", include_subsumed=True)
    # Both narrower terms share segment and family with the query: 2 of 4 levels.
    expected = oracle_common_level("45120000", "45121504") / 4
    assert expected == oracle_common_level("45120000", "45121599") / 4 == 0.5
    assert [(r.entry_iri, r.score) for r in results] == [("urn:e:a", expected), ("urn:e:b", expected)]


def test_rank_is_total():
    rs = [RankedResult("b", "u2", 0.5, "x"), RankedResult("a", "u1", 0.5, "x"), RankedResult("c", "u3", 0.9, "x")]
    assert [r.entry_iri for r in rank(rs)] == ["c", "a", "b"]


@pytest.mark.parametrize(
    "params",
    [
        {"kind": "by-category"},
        {"kind": "by-category", "term": "45120000", "ontology_iri": "urn:o"},
        {"kind": "by-ontology", "ontology_iri": "urn:o", "include_subsumed": "1"},
        {"kind": "by-entry", "entry_iri": "urn:e", "min_similarity": "1.5"},
        {"kind": "by-entry", "entry_iri": "urn:e", "limit": "0"},
        {"kind": "by-entry", "entry_iri": "urn:e", "limit": "many"},
        {"kind": "fuzzy"},
    ],
)
def test_query_validation(params):
    with pytest.raises(QueryError):
        Query.from_params(params)


def test_run_query_dispatch(annotated, scheme, cache):
    store, registry = annotated
    q = Query.from_params({"kind": "by-ontology", "ontology_iri": CAMERA_OWL, "min_similarity": "0.2"})
    assert len(run_query(q, store, registry, scheme, cache)) == 2
    with pytest.raises(QueryError):
        run_query(Query("by-category", term="45120000"), store, registry, None)


def test_aggregation_page_links_and_escapes():
    results = [
        RankedResult("urn:e:1", "http://h/blog/a?x=1&y=2", 1.0, "similarity", "<b>bold</b> & co"),
        RankedResult("urn:e:2", "http://h/blog/b", 0.25, "similarity"),
    ]
    page = build_aggregation_page(results, 'Camera "stuff"')
    assert anchors(page) == ["http://h/blog/a?x=1&y=2", "http://h/blog/b"]
    text = page.decode()
    assert "&lt;b&gt;bold&lt;/b&gt; &amp; co" in text and "<b>" not in text
    assert "<title>Camera &quot;stuff&quot;</title>" in text
    assert 'class="score">0.250<' in text
    empty = build_aggregation_page([], "none")
    assert anchors(empty) == [] and b"no matches" in empty


def test_results_tsv():
    out = results_tsv([RankedResult("urn:e:1", "http://h/x", 0.25, "similarity", "two\nlines")])
    assert out == b"0.250000\tsimilarity\turn:e:1\thttp://h/x\ttwo lines\n"


def test_relate_entries(annotated):
    _store, registry = annotated
    feed = AtomFeed(
        "urn:blog", TextConstruct("b"), "2009-01-01T00:00:00Z",
        entries=tuple(entry(e) for e in [*ENTRY_ONTOLOGY, "urn:e:plain"]),
    )
    graph = relate_entries(feed, registry)
    assert graph.nodes == ("urn:blog", "urn:e:camera", "urn:e:film", "urn:e:chem", "urn:e:plain")
    assert set(graph.topic_edges) == {("urn:blog", e) for e in graph.nodes[1:]}
    assert graph.entry_edges == {
        ("urn:e:camera", "urn:e:chem"): 0.0,
        ("urn:e:camera", "urn:e:film"): 0.25,
        ("urn:e:chem", "urn:e:film"): 0.0,
    }


def test_class_iri_form():
    assert class_iri("urn:blog") == "urn:blog#class"
    assert OntologyDoc("urn:x").classes == frozenset()
