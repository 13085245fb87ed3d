"""Content-addressed result cache, JSONL record streams, and run manifests.

Cache layout: ``<root>/<operation>/<first two hex chars>/<sha256>``. Each
entry is a small JSON document holding the key and the stored value, written
through a temp file and ``os.replace`` so concurrent writers never expose a
torn file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, TypeVar

from .errors import CacheCorrupt, ParseError, StorageError

log = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_MAX_VALUE_BYTES = 1 << 20


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def content_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


class Operation(str, Enum):
    TRANSLATE = "translate"
    COMPLETE = "complete"
    QE_SCORE = "qe_score"


@dataclass(frozen=True)
class CacheKey:
    operation: Operation
    payload_hash: str
    backend_id: str

    @classmethod
    def for_payload(cls, operation: Operation, payload: Mapping[str, Any], backend_id: str) -> CacheKey:
        return cls(operation, content_hash(payload), backend_id)

    @property
    def digest(self) -> str:
        # backend_id participates so two servers never share entries
        return content_hash({"op": self.operation.value, "payload": self.payload_hash, "backend": self.backend_id})

    def to_dict(self) -> dict[str, str]:
        return {"operation": self.operation.value, "payload_hash": self.payload_hash, "backend_id": self.backend_id}


class DiskCache:
    """On-disk cache; safe for concurrent readers/writers in one process."""

    def __init__(self, root: str | os.PathLike, max_value_bytes: int = DEFAULT_MAX_VALUE_BYTES):
        self.root = Path(root)
        self.max_value_bytes = max_value_bytes
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def path_for(self, key: CacheKey) -> Path:
        digest = key.digest
        return self.root / key.operation.value / digest[:2] / digest

    def get(self, key: CacheKey) -> Any | None:
        path = self.path_for(key)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        except OSError as exc:
            raise StorageError(f"cannot read cache entry {path}: {exc}") from exc
        try:
            entry = json.loads(raw)
            if entry["key"] != key.to_dict():
                raise ValueError("key mismatch")
            value = entry["value"]
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("evicting corrupt cache entry %s: %s", path, exc)
            try:
                path.unlink()
            except OSError:
                pass
            raise CacheCorrupt(f"corrupt cache entry {path}") from exc
        with self._lock:
            self.hits += 1
        return value

    def put(self, key: CacheKey, value: Any) -> None:
        if value is None or value == "" or value == [] or value == {}:
            raise StorageError("refusing to cache an empty value")
        data = json.dumps({"key": key.to_dict(), "value": value}, ensure_ascii=False, sort_keys=True)
        encoded = data.encode("utf-8")
        if len(encoded) > self.max_value_bytes:
            raise StorageError(f"cache value of {len(encoded)} bytes exceeds limit {self.max_value_bytes}")
        path = self.path_for(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(encoded)
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageError(f"cannot write cache entry {path}: {exc}") from exc


def cache_get(cache: DiskCache | None, key: CacheKey) -> Any | None:
    """Look up ``key``; a corrupt entry counts as a miss (it has been evicted)."""
    if cache is None:
        return None
    try:
        return cache.get(key)
    except CacheCorrupt:
        return None


def cache_put(cache: DiskCache | None, key: CacheKey, value: Any) -> None:
    if cache is not None:
        cache.put(key, value)


# -- JSONL ------------------------------------------------------------------


def dump_record(record: Any) -> str:
    obj = record.to_dict() if hasattr(record, "to_dict") else record
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: str | os.PathLike, records: Iterable[Any]) -> int:
    """Write one JSON document per line (UTF-8). Returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dump_record(record))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike, record_type: Callable[[Any], T] | type | None = None) -> Iterator[T]:
    """Stream records back, in file order.

    ``record_type`` may be a class with ``from_dict`` or any callable taking
    the decoded dict. A line that is not valid JSON (including a truncated
    final line) raises :class:`ParseError` carrying its 1-based line number.
    """
    if record_type is None:
        convert: Callable[[Any], Any] = lambda d: d
    elif hasattr(record_type, "from_dict"):
        convert = record_type.from_dict  # type: ignore[union-attr]
    else:
        convert = record_type  # type: ignore[assignment]
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                # files we write always end in a newline
                kind = "malformed" if line.endswith("\n") else "truncated"
                raise ParseError(f"{kind} record: {exc.msg}", lineno) from exc
            try:
                yield convert(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"record does not match {getattr(record_type, '__name__', 'type')}: {exc}", lineno) from exc


# -- manifests --------------------------------------------------------------


def fingerprint_lines(lines: Iterable[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict[str, Any]
    corpus_fingerprint: str
    paths: list[str]
    k: int
    strategy: str
    tool_version: str
    corpus_path: str | None = None
    references_path: str | None = None
    references_fingerprint: str | None = None
    started_at: str = ""
    finished_at: str = ""
    artifacts: dict[str, str] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunManifest:
        return cls(**dict(d))

    def write(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | os.PathLike) -> RunManifest:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, TypeError) as exc:
            raise ParseError(f"cannot read manifest {path}: {exc}") from exc
