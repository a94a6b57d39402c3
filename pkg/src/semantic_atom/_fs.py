from __future__ import annotations

import hashlib
import os
import tempfile
from pathlib import Path

TEMP_PREFIX = ".tmp-"


def iri_key(iri: str) -> str:
    """Filesystem- and URL-safe key for an IRI."""
    return hashlib.sha256(iri.encode("utf-8")).hexdigest()[:40]


def fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write-to-temp-then-rename: readers see the old or the new file, never a mix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=TEMP_PREFIX, dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    fsync_dir(path.parent)


def remove_stale_temps(root: Path) -> int:
    """Delete temp files left behind by a crash mid-write."""
    n = 0
    for tmp in root.rglob(TEMP_PREFIX + "*"):
        try:
            tmp.unlink()
            n += 1
        except OSError:
            pass
    return n
