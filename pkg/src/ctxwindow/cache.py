"""Per-chunk feature cache.

Entries are ``.npy`` files under a two-level hash directory, with a JSON index
mapping chunk keys to file path, shape, dtype and SHA-256 checksum. Index and
entry writes go through a temp file and ``os.replace``; a file lock
serializes index updates between writers.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from .errors import CacheError, CacheMissError

INDEX_NAME = "index.json"


@dataclass(frozen=True, order=True)
class ChunkKey:
    doc_id: str
    idx: int
    kind: str  # "standard" | "windowed"

    def __str__(self) -> str:
        return f"{self.doc_id}:{self.kind}:{self.idx}"

    @classmethod
    def parse(cls, text: str) -> "ChunkKey":
        doc_id, kind, idx = text.rsplit(":", 2)
        return cls(doc_id, int(idx), kind)


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class FeatureCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / ".index.lock"))

    @property
    def index_path(self) -> Path:
        return self.root / INDEX_NAME

    def _read_index(self) -> dict:
        if not self.index_path.exists():
            return {}
        return json.loads(self.index_path.read_text("utf-8"))

    def _entry_path(self, key: ChunkKey) -> Path:
        h = hashlib.sha1(str(key).encode("utf-8")).hexdigest()
        return Path(h[:2]) / h[2:4] / f"{h}.npy"

    def put(self, key: ChunkKey, payload: np.ndarray) -> dict:
        payload = np.asarray(payload)
        if payload.dtype != np.float32:
            raise CacheError(f"cache payloads are float32, got {payload.dtype}")
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(payload), allow_pickle=False)
        data = buf.getvalue()
        rel = self._entry_path(key)
        entry = {
            "path": rel.as_posix(),
            "sha256": hashlib.sha256(data).hexdigest(),
            "shape": list(np.shape(payload)),
        }
        with self._lock:
            index = self._read_index()
            if str(key) in index:
                raise CacheError(f"cache key {key} already present")
            atomic_write(self.root / rel, data)
            index[str(key)] = entry
            atomic_write(self.index_path, json.dumps(index, sort_keys=True, indent=1).encode())
        return entry

    def get(self, key: ChunkKey) -> np.ndarray:
        entry = self._read_index().get(str(key))
        if entry is None:
            raise CacheMissError(f"no cache entry for {key}")
        try:
            data = (self.root / entry["path"]).read_bytes()
        except FileNotFoundError:
            raise CacheError(f"cache entry {key}: file {entry['path']} missing") from None
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            raise CacheError(f"cache entry {key}: checksum mismatch")
        return np.load(io.BytesIO(data), allow_pickle=False)

    def __contains__(self, key: ChunkKey) -> bool:
        return str(key) in self._read_index()

    def keys(self) -> list[ChunkKey]:
        return sorted(ChunkKey.parse(k) for k in self._read_index())

    def pending(self, wanted) -> list[ChunkKey]:
        """Keys from ``wanted`` that have no entry yet."""
        index = self._read_index()
        return sorted(k for k in wanted if str(k) not in index)
