import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semantic_atom.errors import OntologyError, RegistryError
from semantic_atom.model import AtomEntry, AtomFeed, TextConstruct
from semantic_atom.ontology import (
    OWL,
    AnnotationRecord,
    OntologyDoc,
    OntologyRegistry,
    class_iri,
    derive_blog_ontology,
    parse_ontology,
    serialize_ontology,
    similarity,
    superclass_closure,
)

from conftest import CAMERA_OWL, CHEM_OWL, FILM_OWL, fixture_bytes
from oracles import oracle_closure, oracle_jaccard, random_dag

PHOTO = "http://example.org/photo#"
POOL = [f"http://example.org/o#C{i}" for i in range(80)]


def test_camera_fixture(ontologies):
    cam = ontologies[CAMERA_OWL]
    assert cam.classes == {PHOTO + "Camera", PHOTO + "DigitalCamera", PHOTO + "Sensor"}
    assert cam.subclass_edges == {(PHOTO + "DigitalCamera", PHOTO + "Camera")}
    assert cam.object_properties == {(PHOTO + "hasSensor", PHOTO + "DigitalCamera", PHOTO + "Sensor")}


def test_description_and_nested_class_forms(ontologies):
    film = ontologies[FILM_OWL]
    assert film.classes == {PHOTO + "Camera", PHOTO + "FilmCamera"}
    assert film.subclass_edges == {(PHOTO + "FilmCamera", PHOTO + "Camera")}


def test_hand_computed_similarities(ontologies):
    cam, film, chem = ontologies[CAMERA_OWL], ontologies[FILM_OWL], ontologies[CHEM_OWL]
    # {Camera, DigitalCamera, Sensor} vs {Camera, FilmCamera}: 1 shared of 4.
    assert Fraction(similarity(cam, film)).limit_denominator(1000) == Fraction(1, 4)
    assert similarity(cam, cam) == 1.0
    assert similarity(cam, chem) == 0.0


def test_empty_ontologies_score_zero():
    assert similarity(OntologyDoc("urn:a"), OntologyDoc("urn:b")) == 0.0


def test_cycle_is_rejected():
    with pytest.raises(OntologyError, match="cyclic"):
        OntologyDoc("urn:o", {"a", "b", "c"}, {("a", "b"), ("b", "c"), ("c", "a")})
    with pytest.raises(OntologyError):
        OntologyDoc("urn:o", {"a"}, {("a", "a")})


def test_undeclared_endpoint_is_rejected():
    with pytest.raises(OntologyError, match="undeclared"):
        OntologyDoc("urn:o", {"a"}, {("a", "b")})


def test_cyclic_rdf_document_is_rejected():
    rdf = (
        '<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#" '
        'xmlns:rdfs="http://www.w3.org/2000/01/rdf-schema#" xmlns:owl="http://www.w3.org/2002/07/owl#">'
        '<owl:Class rdf:about="urn:a"><rdfs:subClassOf rdf:resource="urn:b"/></owl:Class>'
        '<owl:Class rdf:about="urn:b"><rdfs:subClassOf rdf:resource="urn:a"/></owl:Class>'
        "</rdf:RDF>"
    )
    with pytest.raises(OntologyError):
        parse_ontology(rdf, "urn:o")


def test_subclass_of_thing_is_ignored():
    rdf = (
        '<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#" '
        'xmlns:rdfs="http://www.w3.org/2000/01/rdf-schema#" xmlns:owl="http://www.w3.org/2002/07/owl#">'
        f'<owl:Class rdf:about="urn:a"><rdfs:subClassOf rdf:resource="{OWL}Thing"/></owl:Class>'
        "</rdf:RDF>"
    )
    doc = parse_ontology(rdf, "urn:o")
    assert doc.classes == {"urn:a"} and not doc.subclass_edges


def test_wrong_root_is_rejected():
    with pytest.raises(OntologyError):
        parse_ontology("<html/>", "urn:o")


def test_serialize_round_trip(ontologies):
    for iri, doc in ontologies.items():
        assert parse_ontology(serialize_ontology(doc), iri) == doc


@pytest.mark.parametrize("n", [0, 1, 5])
def test_blog_ontology_shape(n):
    feed = AtomFeed(
        "urn:blog", TextConstruct("b"), "2009-01-01T00:00:00Z",
        entries=tuple(AtomEntry(f"urn:e{i}", TextConstruct("t"), "2009-01-01T00:00:00Z") for i in range(n)),
    )
    doc = derive_blog_ontology(feed)
    assert len(doc.classes) == n + 1
    assert doc.subclass_edges == {(class_iri(f"urn:e{i}"), class_iri("urn:blog")) for i in range(n)}
    assert len(doc.object_properties) == n


def test_registry_persists_and_is_idempotent(tmp_path, ontologies):
    reg = OntologyRegistry(tmp_path / "r")
    cam = ontologies[CAMERA_OWL]
    reg.register(AnnotationRecord("urn:e1", CAMERA_OWL), cam)
    reg.register(AnnotationRecord("urn:e1", CAMERA_OWL), cam)
    reg.register(AnnotationRecord("urn:e2", CAMERA_OWL), cam)
    assert len(reg) == 2
    again = OntologyRegistry(tmp_path / "r")
    assert again.lookup("urn:e1") == [CAMERA_OWL]
    assert again.annotated_entries() == ["urn:e1", "urn:e2"]
    assert again.ontology(CAMERA_OWL) == cam
    assert again.ontology("urn:missing") is None


def test_registry_rejects_mismatches(tmp_path, ontologies):
    reg = OntologyRegistry(tmp_path / "r")
    with pytest.raises(RegistryError):
        reg.register(AnnotationRecord("urn:e1", FILM_OWL), ontologies[CAMERA_OWL])
    with pytest.raises(RegistryError):
        reg.register(AnnotationRecord("relative", CAMERA_OWL), ontologies[CAMERA_OWL])
    assert len(reg) == 0


def test_registry_replay_drops_torn_tail(tmp_path, ontologies):
    reg = OntologyRegistry(tmp_path / "r")
    reg.register(AnnotationRecord("urn:e1", CAMERA_OWL), ontologies[CAMERA_OWL])
    with open(reg._log_path, "ab") as fh:
        fh.write(b"urn:e2\thttp://exa")
    again = OntologyRegistry(tmp_path / "r")
    assert again.annotated_entries() == ["urn:e1"]
    again.register(AnnotationRecord("urn:e3", CAMERA_OWL), ontologies[CAMERA_OWL])
    assert OntologyRegistry(tmp_path / "r").annotated_entries() == ["urn:e1", "urn:e3"]


def test_cache_round_trip(cache):
    assert cache.get(CAMERA_OWL) == fixture_bytes("camera.owl")
    assert cache.get("urn:nothing") is None


@st.composite
def dags(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    classes, edges = random_dag(random.Random(seed), POOL, max_classes=20)
    return OntologyDoc(f"urn:o{seed}", classes, edges)


@settings(max_examples=200)
@given(dags())
def test_closure_matches_oracle(doc):
    assert superclass_closure(doc) == oracle_closure(doc.classes, doc.subclass_edges)


@settings(max_examples=200)
@given(dags(), dags())
def test_similarity_properties(a, b):
    s = similarity(a, b)
    assert s == similarity(b, a)
    assert 0.0 <= s <= 1.0
    expected = oracle_jaccard(oracle_closure(a.classes, a.subclass_edges), oracle_closure(b.classes, b.subclass_edges))
    assert abs(s - float(expected)) <= 1e-12
    if a.classes:
        assert similarity(a, a) == 1.0
