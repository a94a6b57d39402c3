"""semantic-atom command line: compose, validate, annotate, publish, query, serve.

Exit codes: 0 success, 1 user error (bad input, 4xx), 2 transport or server error.
Settings resolve flags first, then ``SEMANTIC_ATOM_*`` environment variables,
then a ``key=value`` config file.
"""

from __future__ import annotations

import argparse
import logging
import mimetypes
import os
import sys
import urllib.error
import urllib.request
from dataclasses import replace
from pathlib import Path
from urllib.parse import urlencode

from . import __version__
from ._fs import atomic_write
from .atomxml import ENTRY_MEDIA_TYPE, parse_entry, serialize_entry
from .errors import AtomError
from .model import (
    DEFAULT_EXTENSION_NS,
    AtomCategory,
    AtomContent,
    AtomPerson,
    SemanticsExtension,
    TextConstruct,
    attach_category,
    attach_semantics,
    errors_only,
    new_entry,
    validate_entry,
)
from .ontology import OntologyCache, OntologyRegistry
from .server import TSV_MEDIA_TYPE, AtomPubService, make_server
from .store import BlogStore
from .taxonomy import load_scheme, validate_term

EXIT_OK, EXIT_USER, EXIT_TRANSPORT = 0, 1, 2
ENV_PREFIX = "SEMANTIC_ATOM_"


class UserError(Exception):
    pass


class TransportError(Exception):
    pass


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------


def read_config(path: str | Path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UserError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


class Settings:
    def __init__(self, args: argparse.Namespace, environ: dict[str, str] | None = None) -> None:
        env = os.environ if environ is None else environ
        self.args = args
        self.env = env
        config_path = getattr(args, "config", None) or env.get(ENV_PREFIX + "CONFIG")
        self.file = read_config(config_path) if config_path else {}

    def get(self, name: str, default: str | None = None) -> str | None:
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        value = self.env.get(ENV_PREFIX + name.upper())
        if value is not None:
            return value
        return self.file.get(name, default)


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------


def http(method: str, url: str, body: bytes | None = None, headers: dict[str, str] | None = None, timeout: float = 30.0):
    req = urllib.request.Request(url, data=body, method=method, headers=headers or {})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, dict(resp.headers.items()), resp.read()
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace").strip()
        message = f"HTTP {exc.code} {exc.reason}" + (f": {detail}" if detail else "")
        if exc.code < 500:
            raise UserError(message) from None
        raise TransportError(message) from None
    except (urllib.error.URLError, OSError) as exc:
        reason = getattr(exc, "reason", exc)
        raise TransportError(f"cannot reach {url}: {reason}") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _read_file(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UserError(f"cannot read {path}: {exc.strerror}") from None


def _guess_type(path: str, override: str | None) -> str:
    if override:
        return override
    guessed, _ = mimetypes.guess_type(path)
    return guessed or "application/octet-stream"


def cmd_new(args, settings: Settings) -> int:
    ns = settings.get("namespace", DEFAULT_EXTENSION_NS)
    if args.content is not None and args.content_file is not None:
        raise UserError("give --content or --content-file, not both")
    content = None
    if args.content_file is not None:
        media_type = _guess_type(args.content_file, args.content_type)
        if not media_type.startswith("text/"):
            raise UserError(f"{args.content_file}: {media_type} is not inline text; publish it as media instead")
        try:
            text = _read_file(args.content_file).decode("utf-8")
        except UnicodeDecodeError:
            raise UserError(f"{args.content_file}: not UTF-8 text") from None
        content = AtomContent.html(text) if media_type == "text/html" else AtomContent.text(text)
    elif args.content is not None:
        text = sys.stdin.read() if args.content == "-" else args.content
        content = AtomContent.html(text) if args.content_type == "text/html" else AtomContent.text(text)
    entry = new_entry(TextConstruct(args.title), content, [AtomPerson(a) for a in args.author])
    entry = replace(
        entry,
        contributors=tuple(AtomPerson(c) for c in args.contributor),
        summary=TextConstruct(args.summary) if args.summary else None,
    )
    if args.term:
        entry = attach_category(entry, AtomCategory(args.term, args.scheme, args.label))
    if args.semantics:
        entry = attach_semantics(entry, SemanticsExtension(args.semantics, namespace=ns))
    sys.stdout.buffer.write(serialize_entry(entry, ns))
    return EXIT_OK


def cmd_validate(args, settings: Settings) -> int:
    ns = settings.get("namespace", DEFAULT_EXTENSION_NS)
    entry = parse_entry(_read_file(args.file), ns)
    problems = [str(v) for v in validate_entry(entry, ns)]
    failed = bool(errors_only(validate_entry(entry, ns)))
    taxonomy = settings.get("taxonomy")
    if taxonomy:
        scheme = load_scheme(taxonomy)
        for cat in entry.categories:
            check = validate_term(cat, scheme)
            if not check.ok:
                failed = True
                problems.append(f"error: categories: {check.status.value}: {cat.term}: {check.message}")
            elif check.label is not None:
                problems.append(f"warning: categories: {cat.term}: scheme label is {check.label!r}")
    for line in problems:
        print(line)
    if not problems:
        print("ok")
    return EXIT_USER if failed else EXIT_OK


def cmd_annotate(args, settings: Settings) -> int:
    ns = settings.get("namespace", DEFAULT_EXTENSION_NS)
    entry = parse_entry(_read_file(args.file), ns)
    entry = attach_semantics(entry, SemanticsExtension(args.ontology_iri, namespace=ns))
    atomic_write(args.file, serialize_entry(entry, ns))
    return EXIT_OK


def cmd_publish(args, settings: Settings) -> int:
    ns = settings.get("namespace", DEFAULT_EXTENSION_NS)
    data = _read_file(args.file)
    media_type = args.type
    if media_type is None:
        try:
            parse_entry(data, ns, lenient=True)
            media_type = ENTRY_MEDIA_TYPE
        except AtomError:
            media_type = _guess_type(args.file, None)
    headers = {"Content-Type": media_type}
    if args.slug:
        headers["Slug"] = args.slug
    _status, resp_headers, _body = http("POST", args.url, data, headers)
    print(resp_headers.get("Location", ""))
    return EXIT_OK


def cmd_get(args, settings: Settings) -> int:
    _status, headers, body = http("GET", args.url)
    if "ETag" in headers:
        print(f"ETag: {headers['ETag']}", file=sys.stderr)
    sys.stdout.buffer.write(body)
    return EXIT_OK


def cmd_put(args, settings: Settings) -> int:
    etag = args.etag
    if etag is None:
        _s, headers, _b = http("GET", args.url)
        etag = headers.get("ETag", "")
    body = sys.stdin.buffer.read()
    _status, headers, resp = http("PUT", args.url, body, {"Content-Type": ENTRY_MEDIA_TYPE, "If-Match": etag})
    if "ETag" in headers:
        print(f"ETag: {headers['ETag']}", file=sys.stderr)
    sys.stdout.buffer.write(resp)
    return EXIT_OK


def cmd_delete(args, settings: Settings) -> int:
    headers = {"If-Match": args.etag} if args.etag else {}
    http("DELETE", args.url, headers=headers)
    return EXIT_OK


def cmd_query(args, settings: Settings) -> int:
    base = settings.get("url")
    if not base:
        raise UserError("no server URL: pass --url or set SEMANTIC_ATOM_URL")
    params = {"kind": args.kind}
    for key, value in (
        ("term", args.term), ("scheme", args.scheme), ("ontology_iri", args.ontology),
        ("entry_iri", args.entry), ("min_similarity", args.min_similarity),
        ("limit", args.limit), ("title", args.title),
    ):
        if value is not None:
            params[key] = str(value)
    if args.subsumed:
        params["include_subsumed"] = "1"
    url = f"{base.rstrip('/')}/search?{urlencode(params)}"
    accept = "text/html" if args.html else TSV_MEDIA_TYPE
    _status, _headers, body = http("GET", url, headers={"Accept": accept})
    if args.html:
        atomic_write(args.html, body)
        print(args.html)
    else:
        sys.stdout.buffer.write(body)
    return EXIT_OK


def cmd_cache_put(args, settings: Settings) -> int:
    cache_dir = settings.get("ontology_cache")
    if not cache_dir:
        raise UserError("no cache directory: pass --ontology-cache")
    print(OntologyCache(cache_dir).put(args.ontology_iri, _read_file(args.file)))
    return EXIT_OK


def _bind(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not port.isdigit():
        raise UserError(f"bind address must be HOST:PORT, got {value!r}")
    return host or "127.0.0.1", int(port)


def cmd_serve(args, settings: Settings) -> int:
    root = settings.get("root")
    if not root:
        raise UserError("no store root: pass --root")
    ns = settings.get("namespace", DEFAULT_EXTENSION_NS)
    host, port = _bind(settings.get("bind", "127.0.0.1:8080"))
    store = BlogStore(root, ns)
    for name in args.collection or ["blog"]:
        store.create_collection(name)
    registry = OntologyRegistry(settings.get("registry") or Path(root) / "_registry")
    taxonomy = settings.get("taxonomy")
    cache_dir = settings.get("ontology_cache")
    service = AtomPubService(
        store,
        registry,
        scheme=load_scheme(taxonomy) if taxonomy else None,
        cache=OntologyCache(cache_dir) if cache_dir else None,
        extension_ns=ns,
    )
    httpd = make_server(service, host, port)
    actual_host, actual_port = httpd.server_address[:2]
    print(f"serving http://{actual_host}:{actual_port}", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
        service.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semantic-atom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--namespace", help="extension namespace IRI for the Semantics element")
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("serve", help="run the AtomPub server")
    p.add_argument("--root", help="store directory")
    p.add_argument("--bind", help="HOST:PORT to listen on (port 0 picks a free port)")
    p.add_argument("--taxonomy", help="taxonomy fixture binding categories on every collection")
    p.add_argument("--ontology-cache", dest="ontology_cache", help="directory of locally cached ontology files")
    p.add_argument("--registry", help="ontology registry directory (default ROOT/_registry)")
    p.add_argument("--collection", action="append", help="collection to serve, repeatable (default: blog)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("new", help="compose an entry and print its XML")
    p.add_argument("--title", required=True)
    p.add_argument("--content", help="inline content text, or - for stdin")
    p.add_argument("--content-file", dest="content_file", help="read content from a file")
    p.add_argument("--content-type", dest="content_type", help="override the content media type")
    p.add_argument("--author", action="append", default=[])
    p.add_argument("--contributor", action="append", default=[])
    p.add_argument("--summary")
    p.add_argument("--term", help="category term")
    p.add_argument("--scheme", help="category scheme IRI")
    p.add_argument("--label", help="category label")
    p.add_argument("--semantics", help="IRI of the annotating ontology")
    p.set_defaults(func=cmd_new)

    p = sub.add_parser("publish", help="POST an entry or media file to a collection, print Location")
    p.add_argument("url")
    p.add_argument("file")
    p.add_argument("--type", help="media type (default: entry if the file parses, else by extension)")
    p.add_argument("--slug")
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("get", help="GET a member and print it")
    p.add_argument("url")
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("put", help="PUT an entry read from stdin")
    p.add_argument("url")
    p.add_argument("--etag", help="If-Match value (default: fetch the current one)")
    p.set_defaults(func=cmd_put)

    p = sub.add_parser("delete", help="DELETE a member")
    p.add_argument("url")
    p.add_argument("--etag", help="optional If-Match value")
    p.set_defaults(func=cmd_delete)

    p = sub.add_parser("validate", help="check an entry file (and its categories with --taxonomy)")
    p.add_argument("file")
    p.add_argument("--taxonomy")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("annotate", help="attach a Semantics element to an entry file in place")
    p.add_argument("file")
    p.add_argument("ontology_iri")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("query", help="run a search; print results or save the HTML page")
    p.add_argument("--url", help="server base URL")
    p.add_argument("--kind", required=True, choices=("by-category", "by-ontology", "by-entry"))
    p.add_argument("--term")
    p.add_argument("--scheme")
    p.add_argument("--subsumed", action="store_true", help="include narrower terms")
    p.add_argument("--ontology", help="anchor ontology IRI")
    p.add_argument("--entry", help="anchor entry IRI")
    p.add_argument("--min-similarity", dest="min_similarity", type=float)
    p.add_argument("--limit", type=int)
    p.add_argument("--title", help="aggregation page title")
    p.add_argument("--html", help="write the HTML aggregation page to this file")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("cache-put", help="copy an ontology file into the local ontology cache")
    p.add_argument("ontology_iri")
    p.add_argument("file")
    p.add_argument("--ontology-cache", dest="ontology_cache")
    p.set_defaults(func=cmd_cache_put)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, Settings(args))
    except (UserError, AtomError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
