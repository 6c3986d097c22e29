"""Content-addressed blob store: the in-process stand-in for IPFS.

Blobs are keyed by the SHA-256 of their content, rendered as 64 lowercase
hex chars. Two backends share the interface: MemoryStore for simulation
and tests, DiskStore for inspectable experiment artifacts (one file per
blob at <root>/<first two hex chars>/<cid>).
"""

from __future__ import annotations

import hashlib
import string
import threading
from pathlib import Path

_HEX = set(string.hexdigits.lower())


class InvalidCidError(ValueError):
    pass


class NotFoundError(KeyError):
    pass


class StorageError(OSError):
    pass


class Cid(str):
    """64-char lowercase hex SHA-256 digest of the stored bytes."""

    def __new__(cls, digest):
        if len(digest) != 64 or not set(digest) <= _HEX:
            raise InvalidCidError(f"not a 64-char lowercase hex digest: {digest!r}")
        return super().__new__(cls, digest)

    @classmethod
    def of(cls, data: bytes) -> "Cid":
        return cls(hashlib.sha256(data).hexdigest())


class MemoryStore:
    """In-memory store; writes serialized, reads lock-free."""

    def __init__(self):
        self._blobs = {}
        self._lock = threading.Lock()

    def put(self, data: bytes) -> Cid:
        cid = Cid.of(data)
        with self._lock:
            if cid not in self._blobs:
                self._blobs[cid] = bytes(data)
        return cid

    def get(self, cid) -> bytes:
        cid = Cid(cid)
        try:
            return self._blobs[cid]
        except KeyError:
            raise NotFoundError(cid) from None

    def has(self, cid) -> bool:
        return Cid(cid) in self._blobs

    def __len__(self):
        return len(self._blobs)


class DiskStore:
    """Directory-backed store; blob content is the raw file content."""

    def __init__(self, root):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create store root {self.root}: {exc}") from exc
        self._lock = threading.Lock()

    def _path(self, cid: Cid) -> Path:
        return self.root / cid[:2] / cid

    def put(self, data: bytes) -> Cid:
        cid = Cid.of(data)
        path = self._path(cid)
        with self._lock:
            if path.exists():
                return cid
            try:
                path.parent.mkdir(exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(data)
                tmp.rename(path)
            except OSError as exc:
                raise StorageError(f"write failed for {cid}: {exc}") from exc
        return cid

    def get(self, cid) -> bytes:
        cid = Cid(cid)
        path = self._path(cid)
        if not path.is_file():
            raise NotFoundError(cid)
        try:
            return path.read_bytes()
        except OSError as exc:
            raise StorageError(f"read failed for {cid}: {exc}") from exc

    def has(self, cid) -> bool:
        return self._path(Cid(cid)).is_file()
