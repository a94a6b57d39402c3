"""AtomPub-style HTTP facade over :class:`~semantic_atom.store.BlogStore`.

:meth:`AtomPubService.handle_request` is a plain function of
(method, path, headers, body) so it can be tested without sockets;
:func:`make_server` wraps it in a threading ``http.server``.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping
from urllib.parse import parse_qsl, quote, urlsplit

from .atomxml import ENTRY_MEDIA_TYPE, FEED_MEDIA_TYPE, Node, parse_entry, serialize_entry, serialize_feed, write_xml
from .errors import (
    Conflict,
    EtagMismatch,
    InvalidPageToken,
    NotFound,
    OntologyError,
    QueryError,
    RegistryError,
    SchemaError,
    StoreError,
    UnsupportedMediaType,
    ValidationError,
    XmlParseError,
)
from .model import ATOM_NS, DEFAULT_EXTENSION_NS, AtomEntry, AtomFeed, AtomLink, TextConstruct, now_rfc3339, parse_rfc3339
from .ontology import AnnotationRecord, OntologyCache, OntologyRegistry, parse_ontology
from .retrieval import Query, build_aggregation_page, results_tsv, run_query
from .store import BlogStore, MemberResource
from .taxonomy import TaxonomyScheme, validate_term

log = logging.getLogger(__name__)

APP_NS = "http://www.w3.org/2007/app"
SERVICE_MEDIA_TYPE = "application/atomsvc+xml"
CATEGORIES_MEDIA_TYPE = "application/atomcat+xml"
TSV_MEDIA_TYPE = "text/tab-separated-values"
DEFAULT_PAGE_SIZE = 50


@dataclass
class Response:
    status: int
    headers: dict[str, str] = field(default_factory=dict)
    body: bytes = b""


def _text(status: int, message: str, **headers: str) -> Response:
    return Response(status, {"Content-Type": "text/plain; charset=utf-8", **headers}, (message + "\n").encode("utf-8"))


def _quote_etag(etag: str) -> str:
    return f'"{etag}"'


def _etag_matches(header: str, etag: str) -> bool:
    for candidate in header.split(","):
        candidate = candidate.strip()
        if candidate == "*":
            return True
        if candidate.startswith("W/"):
            candidate = candidate[2:]
        if candidate.strip('"') == etag:
            return True
    return False


def _media_type(headers: Mapping[str, str]) -> str:
    return headers.get("content-type", "application/octet-stream").split(";")[0].strip().lower()


class AtomPubService:
    """Routes:

    ``GET /service``, ``GET /search``, ``GET|POST /{coll}``,
    ``GET /{coll}/categories``, ``GET|PUT|DELETE /{coll}/{member}``,
    ``GET /{coll}/{member}/media``.
    """

    def __init__(
        self,
        store: BlogStore,
        registry: OntologyRegistry,
        *,
        scheme: TaxonomyScheme | None = None,
        bound_collections: set[str] | None = None,
        cache: OntologyCache | None = None,
        extension_ns: str = DEFAULT_EXTENSION_NS,
        workspace_title: str = "Semantic Atom blog",
        base_url: str | None = None,
        async_hooks: bool = True,
    ) -> None:
        self.store = store
        self.registry = registry
        self.scheme = scheme
        # None means every collection is bound to the scheme.
        self.bound_collections = bound_collections
        self.cache = cache
        self.extension_ns = extension_ns
        self.workspace_title = workspace_title
        self.base_url = base_url
        self._hooks = ThreadPoolExecutor(max_workers=1, thread_name_prefix="publish-hook") if async_hooks else None
        self._pending: list[Future] = []
        self._pending_lock = threading.Lock()

    # -- hooks ----------------------------------------------------------------

    def publish_hook(self, member: MemberResource) -> None:
        """Register the entry's Semantics annotations whose ontologies are cached."""
        for sem in member.entry.semantics(self.extension_ns):
            iri = sem.ontology_iri
            data = self.cache.get(iri) if self.cache is not None else None
            if data is None:
                log.warning("ontology %s for entry %s is not in the local cache; not registered", iri, member.entry.id)
                continue
            try:
                doc = parse_ontology(data, iri)
                self.registry.register(AnnotationRecord(member.entry.id, iri), doc)
            except (OntologyError, RegistryError) as exc:
                log.warning("could not register %s for %s: %s", iri, member.entry.id, exc)

    def _after_commit(self, member: MemberResource) -> None:
        if self._hooks is None:
            self._safe_hook(member)
            return
        fut = self._hooks.submit(self._safe_hook, member)
        with self._pending_lock:
            self._pending = [f for f in self._pending if not f.done()] + [fut]

    def _safe_hook(self, member: MemberResource) -> None:
        try:
            self.publish_hook(member)
        except Exception:  # noqa: BLE001 - hooks must never break the response path
            log.exception("publish hook failed for %s", member.entry.id)

    def drain(self, timeout: float | None = None) -> None:
        """Block until queued publish hooks have run."""
        with self._pending_lock:
            pending = list(self._pending)
        for fut in pending:
            fut.result(timeout)

    def close(self) -> None:
        if self._hooks is not None:
            self._hooks.shutdown(wait=True)

    # -- helpers ----------------------------------------------------------------

    def _base(self, headers: Mapping[str, str]) -> str:
        if self.base_url:
            return self.base_url.rstrip("/")
        host = headers.get("host")
        return f"http://{host}" if host else ""

    def _scheme_for(self, collection: str) -> TaxonomyScheme | None:
        if self.scheme is None:
            return None
        if self.bound_collections is not None and collection not in self.bound_collections:
            return None
        return self.scheme

    def _check_categories(self, collection: str, entry: AtomEntry) -> Response | dict[str, str]:
        """409 response for rejected categories, else extra headers for the reply."""
        scheme = self._scheme_for(collection)
        if scheme is None:
            if entry.categories:
                return {"Warning": f'199 - "categories not validated: {collection} has no bound scheme"'}
            return {}
        problems = []
        for cat in entry.categories:
            check = validate_term(cat, scheme)
            if not check.ok:
                problems.append(f"{check.status.value}: {cat.term}: {check.message}")
        if problems:
            return _text(HTTPStatus.CONFLICT, "\n".join(problems))
        return {}

    def _entry_response(self, status: int, member: MemberResource, base: str, extra: dict[str, str] | None = None) -> Response:
        url = f"{base}/{member.collection}/{member.key}"
        headers = {
            "Content-Type": ENTRY_MEDIA_TYPE,
            "ETag": _quote_etag(member.etag),
            "Content-Location": url,
            **(extra or {}),
        }
        if status == HTTPStatus.CREATED:
            headers["Location"] = url
        return Response(status, headers, serialize_entry(member.entry, self.extension_ns))

    # -- dispatch ---------------------------------------------------------------

    def handle_request(self, method: str, path: str, headers: Mapping[str, str], body: bytes = b"") -> Response:
        headers = {k.lower(): v for k, v in headers.items()}
        url = urlsplit(path)
        params = dict(parse_qsl(url.query))
        parts = [p for p in url.path.split("/") if p]
        method = method.upper()
        try:
            return self._route(method, parts, params, headers, body)
        except (XmlParseError, SchemaError, ValidationError, InvalidPageToken, QueryError) as exc:
            return _text(HTTPStatus.BAD_REQUEST, str(exc))
        except NotFound as exc:
            return _text(HTTPStatus.NOT_FOUND, str(exc))
        except EtagMismatch as exc:
            return _text(HTTPStatus.PRECONDITION_FAILED, str(exc))
        except Conflict as exc:
            return _text(HTTPStatus.CONFLICT, str(exc))
        except UnsupportedMediaType as exc:
            return _text(HTTPStatus.UNSUPPORTED_MEDIA_TYPE, str(exc))
        except StoreError as exc:
            return _text(HTTPStatus.BAD_REQUEST, str(exc))

    def _route(self, method, parts, params, headers, body) -> Response:
        allowed: tuple[str, ...]
        if parts == ["service"]:
            allowed = ("GET",)
            if method == "GET":
                return self._service()
        elif parts == ["search"]:
            allowed = ("GET",)
            if method == "GET":
                return self._search(params, headers)
        elif len(parts) == 1:
            allowed = ("GET", "POST")
            if method == "GET":
                return self._feed(parts[0], params, headers)
            if method == "POST":
                return self._post(parts[0], headers, body)
        elif len(parts) == 2 and parts[1] == "categories":
            allowed = ("GET",)
            if method == "GET":
                return self._categories(parts[0])
        elif len(parts) == 2:
            allowed = ("GET", "PUT", "DELETE")
            coll, key = parts
            if method == "GET":
                return self._get(coll, key, headers)
            if method == "PUT":
                return self._put(coll, key, headers, body)
            if method == "DELETE":
                return self._delete(coll, key, headers)
        elif len(parts) == 3 and parts[2] == "media":
            allowed = ("GET",)
            if method == "GET":
                return self._media(parts[0], parts[1])
        else:
            return _text(HTTPStatus.NOT_FOUND, "no such resource")
        return _text(HTTPStatus.METHOD_NOT_ALLOWED, f"{method} not allowed", Allow=", ".join(allowed))

    # -- handlers ---------------------------------------------------------------

    def _service(self) -> Response:
        colls = []
        for coll in self.store.collections():
            kids = [Node(ATOM_NS, "title", {"type": "text"}, coll.title)]
            kids += [Node(APP_NS, "accept", text=t) for t in coll.accepted_media_types]
            kids.append(Node(APP_NS, "categories", {"href": f"/{coll.name}/categories"}))
            colls.append(Node(APP_NS, "collection", {"href": f"/{coll.name}"}, children=kids))
        workspace = Node(APP_NS, "workspace", children=[Node(ATOM_NS, "title", {"type": "text"}, self.workspace_title), *colls])
        root = Node(APP_NS, "service", children=[workspace])
        return Response(HTTPStatus.OK, {"Content-Type": SERVICE_MEDIA_TYPE}, write_xml(root, {ATOM_NS: "atom", APP_NS: "app"}))

    def _categories(self, collection: str) -> Response:
        self.store.collection(collection)
        scheme = self._scheme_for(collection)
        if scheme is None:
            root = Node(APP_NS, "categories", {"fixed": "no"})
        else:
            cats = [
                Node(ATOM_NS, "category", {"term": code.digits, "label": scheme.nodes[code.digits]})
                for code in scheme.codes()
            ]
            root = Node(APP_NS, "categories", {"fixed": "yes", "scheme": scheme.scheme_iri}, children=cats)
        return Response(HTTPStatus.OK, {"Content-Type": CATEGORIES_MEDIA_TYPE}, write_xml(root, {ATOM_NS: "atom", APP_NS: "app"}))

    def _feed(self, collection: str, params: dict[str, str], headers: Mapping[str, str]) -> Response:
        try:
            page_size = int(params.get("page_size", DEFAULT_PAGE_SIZE))
        except ValueError:
            return _text(HTTPStatus.BAD_REQUEST, "page_size must be an integer")
        feed, token = self.store.list_feed(collection, page_size, params.get("page_token"))
        base = self._base(headers)
        links = [AtomLink(f"{base}/{collection}", rel="self")]
        if token:
            links.append(AtomLink(f"{base}/{collection}?page_size={page_size}&page_token={quote(token)}", rel="next"))
        feed = replace(feed, links=tuple(links))
        return Response(HTTPStatus.OK, {"Content-Type": FEED_MEDIA_TYPE}, serialize_feed(feed, self.extension_ns))

    def _post(self, collection: str, headers: Mapping[str, str], body: bytes) -> Response:
        self.store.collection(collection)
        base = self._base(headers)
        if _media_type(headers) == "application/atom+xml":
            entry = parse_entry(body, self.extension_ns, lenient=True)
            checked = self._check_categories(collection, entry)
            if isinstance(checked, Response):
                return checked
            member = self.store.create_member(collection, entry)
            self._after_commit(member)
            return self._entry_response(HTTPStatus.CREATED, member, base, checked)
        member = self.store.create_member(
            collection,
            media=body,
            media_type=headers.get("content-type", "application/octet-stream"),
            slug=headers.get("slug"),
        )
        return self._entry_response(HTTPStatus.CREATED, member, base)

    def _get(self, collection: str, key: str, headers: Mapping[str, str]) -> Response:
        member = self.store.read_member(collection, self.store.resolve_key(collection, key))
        inm = headers.get("if-none-match")
        if inm and _etag_matches(inm, member.etag):
            return Response(HTTPStatus.NOT_MODIFIED, {"ETag": _quote_etag(member.etag)})
        return self._entry_response(HTTPStatus.OK, member, self._base(headers))

    def _put(self, collection: str, key: str, headers: Mapping[str, str], body: bytes) -> Response:
        entry_id = self.store.resolve_key(collection, key)
        if_match = headers.get("if-match")
        if not if_match:
            return _text(HTTPStatus.PRECONDITION_REQUIRED, "PUT requires an If-Match header")
        current = self.store.read_member(collection, entry_id)
        if not _etag_matches(if_match, current.etag):
            return _text(HTTPStatus.PRECONDITION_FAILED, "If-Match does not match the current etag")
        entry = parse_entry(body, self.extension_ns, lenient=True)
        checked = self._check_categories(collection, entry)
        if isinstance(checked, Response):
            return checked
        member = self.store.update_member(collection, entry_id, entry, current.etag)
        self._after_commit(member)
        return self._entry_response(HTTPStatus.OK, member, self._base(headers), checked)

    def _delete(self, collection: str, key: str, headers: Mapping[str, str]) -> Response:
        entry_id = self.store.resolve_key(collection, key)
        if_match = headers.get("if-match")
        if if_match and not _etag_matches(if_match, self.store.read_member(collection, entry_id).etag):
            return _text(HTTPStatus.PRECONDITION_FAILED, "If-Match does not match the current etag")
        self.store.delete_member(collection, entry_id)
        return Response(HTTPStatus.NO_CONTENT)

    def _media(self, collection: str, key: str) -> Response:
        member = self.store.read_member(collection, self.store.resolve_key(collection, key))
        if member.media is None:
            return _text(HTTPStatus.NOT_FOUND, "member has no media resource")
        return Response(HTTPStatus.OK, {"Content-Type": member.media_type, "ETag": _quote_etag(member.etag)}, member.media)

    def _search(self, params: dict[str, str], headers: Mapping[str, str]) -> Response:
        query = Query.from_params(params)
        base = self._base(headers)
        results = run_query(query, self.store, self.registry, self.scheme, self.cache, base)
        title = params.get("title") or f"Entries matching {query.term or query.ontology_iri or query.entry_iri}"
        accept = headers.get("accept", "")
        if "application/atom+xml" in accept:
            return Response(HTTPStatus.OK, {"Content-Type": FEED_MEDIA_TYPE}, self._results_feed(results, title, params))
        if TSV_MEDIA_TYPE in accept:
            return Response(HTTPStatus.OK, {"Content-Type": TSV_MEDIA_TYPE + "; charset=utf-8"}, results_tsv(results))
        return Response(HTTPStatus.OK, {"Content-Type": "text/html; charset=utf-8"}, build_aggregation_page(results, title))

    def _results_feed(self, results, title: str, params: dict[str, str]) -> bytes:
        entries = []
        for r in results:
            coll = self.store.locate(r.entry_iri)
            if coll is not None:
                entries.append(self.store.read_member(coll, r.entry_iri).entry)
        canonical = "&".join(f"{k}={v}" for k, v in sorted(params.items()))
        feed_id = f"urn:uuid:{uuid.uuid5(uuid.NAMESPACE_URL, 'search?' + canonical)}"
        # A result set can repeat an id across collections; a feed cannot.
        unique = list({e.id: e for e in entries}.values())
        updated = max((e.updated for e in unique), key=parse_rfc3339, default=None) or now_rfc3339()
        feed = AtomFeed(id=feed_id, title=TextConstruct(title), updated=updated, entries=tuple(unique))
        return serialize_feed(feed, self.extension_ns)


# ---------------------------------------------------------------------------
# Socket adapter
# ---------------------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    server_version = "SemanticAtom/0.1"
    protocol_version = "HTTP/1.1"

    def _dispatch(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        service: AtomPubService = self.server.service  # type: ignore[attr-defined]
        resp = service.handle_request(self.command, self.path, dict(self.headers.items()), body)
        self.send_response(resp.status)
        for k, v in resp.headers.items():
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(resp.body)))
        self.end_headers()
        if self.command != "HEAD" and resp.body:
            self.wfile.write(resp.body)

    do_GET = do_POST = do_PUT = do_DELETE = _dispatch

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        log.info("%s %s", self.address_string(), format % args)


def make_server(service: AtomPubService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    httpd = ThreadingHTTPServer((host, port), _Handler)
    httpd.daemon_threads = True
    httpd.service = service  # type: ignore[attr-defined]
    return httpd
