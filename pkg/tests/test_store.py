import dataclasses

import pytest
from hypothesis import HealthCheck, given, settings

from semantic_atom.atomxml import parse_entry
from semantic_atom.errors import (
    Conflict,
    EtagMismatch,
    InvalidPageToken,
    NotFound,
    StoreError,
    UnsupportedMediaType,
    ValidationError,
)
from semantic_atom.model import AtomEntry, AtomPerson, TextConstruct, parse_rfc3339
from semantic_atom.store import BlogStore, media_type_accepted, member_key

from strategies import entries


def entry(n: int = 1, title: str = "t", updated: str = "2009-08-31T18:55:12.569Z") -> AtomEntry:
    return AtomEntry(f"urn:uuid:{n}", TextConstruct(title), updated, authors=(AtomPerson("a"),))


def test_create_read_update_delete(store, reference_entry):
    e = parse_entry(reference_entry)
    created = store.create_member("blog", e)
    assert created.key == member_key(e.id)
    got = store.read_member("blog", e.id)
    assert got.entry == e and got.etag == created.etag

    changed = dataclasses.replace(e, title=TextConstruct("Revised"))
    updated = store.update_member("blog", e.id, changed, created.etag)
    assert updated.etag != created.etag
    got = store.read_member("blog", e.id)
    assert got.entry.title.text == "Revised"
    # unchanged `updated` is bumped so readers can see the edit
    assert parse_rfc3339(got.entry.updated) > parse_rfc3339(e.updated)

    store.delete_member("blog", e.id)
    with pytest.raises(NotFound):
        store.read_member("blog", e.id)
    with pytest.raises(NotFound):
        store.delete_member("blog", e.id)


def test_stale_etag_and_duplicate_id(store):
    m = store.create_member("blog", entry())
    store.update_member("blog", m.entry.id, entry(title="x"), m.etag)
    with pytest.raises(EtagMismatch):
        store.update_member("blog", m.entry.id, entry(title="y"), m.etag)
    with pytest.raises(Conflict) as info:
        store.create_member("blog", entry())
    assert not isinstance(info.value, EtagMismatch)


def test_invalid_entry_is_refused(store):
    with pytest.raises(ValidationError):
        store.create_member("blog", AtomEntry("urn:x", TextConstruct(""), "2009-01-01T00:00:00Z"))
    assert store.collection("blog").member_ids == ()


def test_missing_id_and_updated_are_filled(store):
    m = store.create_member("blog", AtomEntry("", TextConstruct("t"), ""))
    assert m.entry.id.startswith("urn:uuid:")
    assert parse_rfc3339(m.entry.updated)


def test_unknown_collection(store):
    with pytest.raises(NotFound):
        store.create_member("nope", entry())
    with pytest.raises(StoreError):
        store.create_collection("bad name")


def test_paging_newest_first(store):
    for n in range(5):
        store.create_member("blog", entry(n, updated=f"2009-01-0{n + 1}T00:00:00Z"))
    feed, token = store.list_feed("blog", page_size=3)
    assert [e.id for e in feed.entries] == ["urn:uuid:4", "urn:uuid:3", "urn:uuid:2"]
    assert feed.updated == "2009-01-05T00:00:00Z"
    feed, token2 = store.list_feed("blog", page_size=3, page_token=token)
    assert [e.id for e in feed.entries] == ["urn:uuid:1", "urn:uuid:0"]
    assert token2 is None
    with pytest.raises(InvalidPageToken):
        store.list_feed("blog", page_token="garbage!")
    with pytest.raises(InvalidPageToken):
        store.list_feed("blog", page_token="bzo5OQ")  # o:99
    with pytest.raises(StoreError):
        store.list_feed("blog", page_size=0)


def test_empty_feed_uses_collection_timestamp(store):
    feed, token = store.list_feed("blog")
    assert feed.entries == () and token is None
    assert feed.updated == store.collection("blog").created


def test_media_members(store):
    m = store.create_member("blog", media=b"\x89PNG", media_type="image/png", slug="photo")
    assert m.entry.content.kind == "out-of-line"
    assert m.entry.content.src == store.media_url("blog", m.key)
    assert [link.rel for link in m.entry.links] == ["edit-media"]
    got = store.read_member("blog", m.entry.id)
    assert (got.media, got.media_type) == (b"\x89PNG", "image/png")
    with pytest.raises(UnsupportedMediaType):
        store.create_member("blog", media=b"x", media_type="application/x-msdownload")
    store.delete_member("blog", m.entry.id)
    assert list((store.root / "blog" / "members").iterdir()) == []


def test_media_type_matching():
    accept = ("image/*", "text/plain")
    assert media_type_accepted("image/png", accept)
    assert media_type_accepted("text/plain; charset=utf-8", accept)
    assert not media_type_accepted("text/html", accept)


def test_reopen_sees_everything_and_cleans_debris(tmp_path):
    root = tmp_path / "s"
    s = BlogStore(root)
    s.create_collection("blog", "Blog")
    a = s.create_member("blog", entry(1))
    s.create_member("blog", entry(2))
    members = root / "blog" / "members"
    (members / ".tmp-abandoned").write_bytes(b"half")
    (members / "deadbeef.atom.xml").write_bytes(b"<orphan/>")

    again = BlogStore(root)
    assert again.collection("blog").member_ids == ("urn:uuid:2", "urn:uuid:1")
    assert again.read_member("blog", "urn:uuid:1").etag == a.etag
    assert sorted(p.name for p in members.iterdir()) == sorted(
        f"{member_key(f'urn:uuid:{n}')}.atom.xml" for n in (1, 2)
    )


def test_create_collection_is_idempotent(store):
    first = store.collection("blog")
    assert store.create_collection("blog", "other title") == first


def test_resolve_key_and_locate(store):
    m = store.create_member("blog", entry())
    assert store.resolve_key("blog", m.key) == m.entry.id
    assert store.locate(m.entry.id) == "blog"
    assert store.locate("urn:none") is None
    with pytest.raises(NotFound):
        store.resolve_key("blog", "0" * 40)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(entries(), entries())
def test_etag_tracks_content(store, a, b):
    b = dataclasses.replace(b, id=a.id + "-b")
    ma = store.create_member("blog", a)
    mb = store.create_member("blog", b)
    assert store.read_member("blog", a.id).entry == a
    assert (ma.etag == mb.etag) == (ma.entry == mb.entry)
    for m in (ma, mb):
        store.delete_member("blog", m.entry.id)
