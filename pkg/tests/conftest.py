from __future__ import annotations

import json
import threading
from pathlib import Path

import pytest

from semantic_atom.ontology import OntologyCache, OntologyRegistry, parse_ontology
from semantic_atom.server import AtomPubService, make_server
from semantic_atom.store import BlogStore
from semantic_atom.taxonomy import load_scheme

FIXTURES = Path(__file__).parent / "fixtures"

# Field values of the shipped reference entry document.
REFERENCE = json.loads((FIXTURES / "reference_entry.fields.json").read_text(encoding="utf-8"))
REFERENCE_ID = REFERENCE["id"]
CAMERA_OWL = REFERENCE["semantics"]
FILM_OWL = "http://example.org/ontology/film-camera.owl"
CHEM_OWL = "http://example.org/ontology/chemistry.owl"
UNSPSC = "http://www.unspsc.org/UNv1111201"


def fixture_bytes(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


@pytest.fixture
def reference_entry() -> bytes:
    return fixture_bytes("reference_entry.xml")


@pytest.fixture
def scheme():
    return load_scheme(FIXTURES / "unspsc_fixture.txt")


@pytest.fixture
def ontologies():
    return {
        CAMERA_OWL: parse_ontology(fixture_bytes("camera.owl"), CAMERA_OWL),
        FILM_OWL: parse_ontology(fixture_bytes("film_camera.owl"), FILM_OWL),
        CHEM_OWL: parse_ontology(fixture_bytes("chemistry.owl"), CHEM_OWL),
    }


@pytest.fixture
def cache(tmp_path):
    c = OntologyCache(tmp_path / "cache")
    c.put(CAMERA_OWL, fixture_bytes("camera.owl"))
    c.put(FILM_OWL, fixture_bytes("film_camera.owl"))
    c.put(CHEM_OWL, fixture_bytes("chemistry.owl"))
    return c


@pytest.fixture
def store(tmp_path):
    s = BlogStore(tmp_path / "store")
    s.create_collection("blog", "My blog")
    return s


@pytest.fixture
def registry(tmp_path):
    return OntologyRegistry(tmp_path / "registry")


@pytest.fixture
def service(store, registry, scheme, cache):
    svc = AtomPubService(store, registry, scheme=scheme, cache=cache, async_hooks=False)
    yield svc
    svc.close()


@pytest.fixture
def live_server(service):
    """The service above on a real socket; yields the base URL."""
    httpd = make_server(service, "127.0.0.1", 0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    host, port = httpd.server_address[:2]
    yield f"http://{host}:{port}"
    httpd.shutdown()
    httpd.server_close()


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion in the summary.
# ---------------------------------------------------------------------------

_criteria: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _criteria[label] = "FAIL" if call.excinfo is not None else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split()[0])):
        terminalreporter.write_line(f"{_criteria[label]}  criterion {label}")
