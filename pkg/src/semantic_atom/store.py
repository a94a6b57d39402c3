"""File-backed AtomPub collection store.

Layout under the store root::

    <collection>/collection.json          title, feed id, accepted media types
    <collection>/index.json               member ids, newest first
    <collection>/members/<key>.atom.xml   canonical entry serialization
    <collection>/members/<key>.media      media resource bytes (media-link members)
    <collection>/members/<key>.mediatype

Every file is replaced with write-to-temp-then-rename, and the index is the
commit point: a member exists once its id is in the index.
"""

from __future__ import annotations

import base64
import binascii
import fnmatch
import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, replace
from datetime import timedelta
from pathlib import Path

from ._fs import atomic_write, iri_key, remove_stale_temps
from .atomxml import parse_entry, serialize_entry
from .errors import Conflict, EtagMismatch, InvalidPageToken, NotFound, StoreError, UnsupportedMediaType, ValidationError
from .model import (
    DEFAULT_EXTENSION_NS,
    AtomContent,
    AtomEntry,
    AtomFeed,
    AtomLink,
    TextConstruct,
    errors_only,
    format_rfc3339,
    new_id,
    now_rfc3339,
    parse_rfc3339,
    validate_entry,
)

log = logging.getLogger(__name__)

DEFAULT_ACCEPT = (
    "application/atom+xml;type=entry",
    "text/plain",
    "text/html",
    "application/xhtml+xml",
    "image/*",
    "audio/*",
    "video/*",
)

_SLUG = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]*$")


def member_key(entry_id: str) -> str:
    return iri_key(entry_id)


def media_type_accepted(media_type: str, accept: tuple[str, ...]) -> bool:
    base = media_type.split(";")[0].strip().lower()
    return any(fnmatch.fnmatchcase(base, pattern.split(";")[0].strip().lower()) for pattern in accept)


def _fresh_timestamp(previous: str | None) -> str:
    """Current instant, nudged past ``previous`` so versions never share a timestamp."""
    now = now_rfc3339()
    if previous:
        try:
            prev = parse_rfc3339(previous)
        except ValueError:
            return now
        if parse_rfc3339(now) <= prev:
            return format_rfc3339(prev + timedelta(milliseconds=1))
    return now


@dataclass(frozen=True)
class Collection:
    name: str
    title: str
    id: str
    accepted_media_types: tuple[str, ...]
    created: str
    member_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class MemberResource:
    collection: str
    key: str
    entry: AtomEntry
    etag: str
    media_type: str | None = None
    media: bytes | None = None


class BlogStore:
    def __init__(self, root: str | Path, extension_ns: str = DEFAULT_EXTENSION_NS) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.extension_ns = extension_ns
        self._meta_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._collections: dict[str, Collection] = {}
        removed = remove_stale_temps(self.root)
        if removed:
            log.info("removed %d stale temp file(s)", removed)
        for meta in sorted(self.root.glob("*/collection.json")):
            self._load_collection(meta.parent)

    # -- collections ---------------------------------------------------------

    def _load_collection(self, path: Path) -> None:
        meta = json.loads((path / "collection.json").read_text(encoding="utf-8"))
        index_path = path / "index.json"
        ids = tuple(json.loads(index_path.read_text(encoding="utf-8"))) if index_path.exists() else ()
        coll = Collection(path.name, meta["title"], meta["id"], tuple(meta["accept"]), meta["created"], ids)
        self._collections[coll.name] = coll
        self._locks[coll.name] = threading.Lock()
        self._drop_orphans(coll)

    def _drop_orphans(self, coll: Collection) -> None:
        # Member files written by a create that crashed before its index commit.
        live = {member_key(i) for i in coll.member_ids}
        for path in (self.root / coll.name / "members").glob("*"):
            if path.name.split(".")[0] not in live:
                path.unlink()

    def create_collection(self, name: str, title: str | None = None, accept: tuple[str, ...] | None = None) -> Collection:
        """Create a collection, or return the existing one of that name."""
        if not _SLUG.match(name):
            raise StoreError(f"collection name must be a URL-safe slug: {name!r}")
        with self._meta_lock:
            if name in self._collections:
                return self._collections[name]
            coll = Collection(name, title or name, new_id(), tuple(accept or DEFAULT_ACCEPT), now_rfc3339())
            base = self.root / name
            (base / "members").mkdir(parents=True, exist_ok=True)
            atomic_write(base / "index.json", b"[]")
            meta = {"title": coll.title, "id": coll.id, "accept": list(coll.accepted_media_types), "created": coll.created}
            atomic_write(base / "collection.json", json.dumps(meta, indent=2).encode("utf-8"))
            self._collections[name] = coll
            self._locks[name] = threading.Lock()
            return coll

    def collection(self, name: str) -> Collection:
        try:
            return self._collections[name]
        except KeyError:
            raise NotFound(f"no collection named {name!r}") from None

    def collections(self) -> list[Collection]:
        return [self._collections[n] for n in sorted(self._collections)]

    def _set_members(self, coll: Collection, ids: tuple[str, ...]) -> None:
        atomic_write(self.root / coll.name / "index.json", json.dumps(list(ids), indent=0).encode("utf-8"))
        self._collections[coll.name] = replace(coll, member_ids=ids)

    # -- members -------------------------------------------------------------

    def _paths(self, collection: str, key: str) -> tuple[Path, Path, Path]:
        base = self.root / collection / "members" / key
        return (
            base.with_name(key + ".atom.xml"),
            base.with_name(key + ".media"),
            base.with_name(key + ".mediatype"),
        )

    def _serialize(self, entry: AtomEntry) -> bytes:
        return serialize_entry(entry, self.extension_ns)

    def _check(self, entry: AtomEntry) -> None:
        errors = errors_only(validate_entry(entry, self.extension_ns))
        if errors:
            raise ValidationError("; ".join(map(str, errors)), errors)

    def media_url(self, collection: str, key: str) -> str:
        return f"/{collection}/{key}/media"

    def create_member(
        self,
        collection: str,
        entry: AtomEntry | None = None,
        *,
        media: bytes | None = None,
        media_type: str | None = None,
        slug: str | None = None,
    ) -> MemberResource:
        """Store an Atom entry, or a media resource plus its media-link entry."""
        coll = self.collection(collection)
        if (entry is None) == (media is None):
            raise StoreError("create_member needs exactly one of entry and media")
        if media is not None:
            if not media_type or not media_type_accepted(media_type, coll.accepted_media_types):
                raise UnsupportedMediaType(f"collection {collection!r} does not accept {media_type!r}")
            entry_id = new_id()
            src = self.media_url(collection, member_key(entry_id))
            entry = AtomEntry(
                id=entry_id,
                title=TextConstruct(slug or "Media resource"),
                updated=now_rfc3339(),
                content=AtomContent.out_of_line(src, media_type),
                links=(AtomLink(src, rel="edit-media", type=media_type),),
            )
        else:
            if not entry.id:
                entry = replace(entry, id=new_id())
            if not entry.updated:
                entry = replace(entry, updated=now_rfc3339())
        self._check(entry)
        key = member_key(entry.id)
        data = self._serialize(entry)
        with self._locks[collection]:
            coll = self.collection(collection)
            if entry.id in coll.member_ids:
                raise Conflict(f"an entry with id {entry.id!r} already exists in {collection!r}")
            entry_path, media_path, type_path = self._paths(collection, key)
            if media is not None:
                atomic_write(media_path, media)
                atomic_write(type_path, media_type.encode("utf-8"))
            atomic_write(entry_path, data)
            self._set_members(coll, (entry.id,) + coll.member_ids)
        return MemberResource(collection, key, entry, _etag(data), media_type, media)

    def resolve_key(self, collection: str, key: str) -> str:
        """Entry id for a member key (the last path segment of a member URL)."""
        for entry_id in self.collection(collection).member_ids:
            if member_key(entry_id) == key:
                return entry_id
        raise NotFound(f"no member {key!r} in {collection!r}")

    def read_member(self, collection: str, entry_id: str) -> MemberResource:
        coll = self.collection(collection)
        if entry_id not in coll.member_ids:
            raise NotFound(f"no member {entry_id!r} in {collection!r}")
        key = member_key(entry_id)
        entry_path, media_path, type_path = self._paths(collection, key)
        try:
            data = entry_path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no member {entry_id!r} in {collection!r}") from None
        media_type = media = None
        if type_path.exists():
            media_type = type_path.read_text(encoding="utf-8")
            media = media_path.read_bytes()
        return MemberResource(collection, key, parse_entry(data, self.extension_ns), _etag(data), media_type, media)

    def update_member(self, collection: str, entry_id: str, entry: AtomEntry, expected_etag: str) -> MemberResource:
        with self._locks[self.collection(collection).name]:
            current = self.read_member(collection, entry_id)
            if current.etag != expected_etag:
                raise EtagMismatch(f"etag {expected_etag!r} is stale (current {current.etag!r})")
            entry = replace(entry, id=entry_id)
            if not entry.updated or entry.updated == current.entry.updated:
                entry = replace(entry, updated=_fresh_timestamp(current.entry.updated))
            self._check(entry)
            data = self._serialize(entry)
            atomic_write(self._paths(collection, current.key)[0], data)
        return MemberResource(collection, current.key, entry, _etag(data), current.media_type, current.media)

    def delete_member(self, collection: str, entry_id: str) -> None:
        with self._locks[self.collection(collection).name]:
            coll = self.collection(collection)
            if entry_id not in coll.member_ids:
                raise NotFound(f"no member {entry_id!r} in {collection!r}")
            self._set_members(coll, tuple(i for i in coll.member_ids if i != entry_id))
            for path in self._paths(collection, member_key(entry_id)):
                path.unlink(missing_ok=True)

    def locate(self, entry_id: str) -> str | None:
        """Name of the collection holding ``entry_id``, if any."""
        for coll in self.collections():
            if entry_id in coll.member_ids:
                return coll.name
        return None

    def members(self, collection: str) -> list[MemberResource]:
        out = []
        for entry_id in self.collection(collection).member_ids:
            try:
                out.append(self.read_member(collection, entry_id))
            except NotFound:
                continue  # deleted while we were scanning
        return out

    def list_feed(
        self, collection: str, page_size: int | None = None, page_token: str | None = None
    ) -> tuple[AtomFeed, str | None]:
        """One page of the collection feed, newest first, plus the next-page token."""
        coll = self.collection(collection)
        ids = coll.member_ids
        start = _decode_token(page_token, len(ids)) if page_token else 0
        if page_size is not None and page_size < 1:
            raise StoreError("page_size must be positive")
        stop = len(ids) if page_size is None else min(len(ids), start + page_size)
        current = {m.entry.id: m.entry for m in self.members(collection)}
        updated = [e.updated for e in current.values()]
        feed = AtomFeed(
            id=coll.id,
            title=TextConstruct(coll.title),
            updated=max(updated, key=parse_rfc3339) if updated else coll.created,
            entries=tuple(current[i] for i in ids[start:stop] if i in current),
        )
        next_token = _encode_token(stop) if stop < len(ids) else None
        return feed, next_token


def _etag(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:32]


def _encode_token(offset: int) -> str:
    return base64.urlsafe_b64encode(f"o:{offset}".encode()).decode().rstrip("=")


def _decode_token(token: str, size: int) -> int:
    try:
        raw = base64.urlsafe_b64decode(token + "=" * (-len(token) % 4)).decode()
        tag, _, num = raw.partition(":")
        if tag != "o" or not num.isdigit():
            raise ValueError
        offset = int(num)
    except (ValueError, binascii.Error, UnicodeDecodeError):
        raise InvalidPageToken(f"invalid page token {token!r}") from None
    if offset > size:
        raise InvalidPageToken(f"page token {token!r} is out of range")
    return offset
