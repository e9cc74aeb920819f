"""Corpus feature index: build, persist, load, validate.

The on-disk format is binary, little-endian, and checksummed:

    magic "T2IQIDX1" (8 bytes)
    format version, u32
    header block length, u32, then that many bytes of JSON
        {"descriptor": {...}, "build_timestamp": "...", "corpus_fingerprint": "..."}
    entry count, u64
    per entry: doc_id byte length u32, doc_id UTF-8, embedding_dim float32
    CRC-32C over every preceding byte, u32

Entries are stored sorted by doc_id ascending regardless of build input
order, so iteration order and tie-breaking are reproducible everywhere.
Loaded indexes are immutable.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._crc32c import crc32c
from .backends import BackendDescriptor, EmbeddingBackend, EmbeddingVector, embed
from .errors import (
    AllDocumentsFailed,
    BackendMismatch,
    CorruptIndex,
    DuplicateDocId,
    EmptyCorpus,
    IoFailure,
    VersionUnsupported,
)
from .imaging import load_image

MAGIC = b"T2IQIDX1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    image_uri: str
    attributes: frozenset[str] | None = None

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if self.attributes is not None:
            object.__setattr__(self, "attributes", frozenset(self.attributes))


def corpus_fingerprint(doc_ids: list[str]) -> str:
    """Hash of the doc_id set; changes iff the set changes."""
    return hashlib.sha256("\n".join(sorted(doc_ids)).encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class FeatureIndex:
    descriptor: BackendDescriptor
    doc_ids: tuple[str, ...]
    vectors: np.ndarray  # (n, dim) float32, rows aligned with doc_ids
    build_timestamp: str
    corpus_fingerprint: str

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape != (len(self.doc_ids), self.descriptor.embedding_dim):
            raise ValueError(
                f"vector block shape {vectors.shape} does not match "
                f"{len(self.doc_ids)} docs x {self.descriptor.embedding_dim} dims"
            )
        if list(self.doc_ids) != sorted(set(self.doc_ids)):
            raise ValueError("doc_ids must be unique and sorted ascending")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureIndex):
            return NotImplemented
        return (
            self.descriptor == other.descriptor
            and self.doc_ids == other.doc_ids
            and self.build_timestamp == other.build_timestamp
            and self.corpus_fingerprint == other.corpus_fingerprint
            and np.array_equal(self.vectors, other.vectors, equal_nan=True)
        )

    def vector_for(self, doc_id: str) -> EmbeddingVector:
        position = self.doc_ids.index(doc_id)
        return EmbeddingVector(
            backend_id=self.descriptor.backend_id,
            dim=self.descriptor.embedding_dim,
            values=self.vectors[position].copy(),
            weights_fingerprint=self.descriptor.weights_fingerprint,
        )


@dataclass(frozen=True)
class DocumentFailure:
    doc_id: str
    error: str


@dataclass(frozen=True)
class IndexBuildResult:
    index: FeatureIndex
    failures: tuple[DocumentFailure, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class CompatibilityIssue:
    field: str
    expected: object
    actual: object


def validate_compatibility(
    index: FeatureIndex, query: EmbeddingVector
) -> CompatibilityIssue | None:
    """None when the query can be scanned against the index, else the first
    differing field (backend_id, then dim, then weights_fingerprint)."""
    d = index.descriptor
    if query.backend_id != d.backend_id:
        return CompatibilityIssue("backend_id", d.backend_id, query.backend_id)
    if query.dim != d.embedding_dim:
        return CompatibilityIssue("dim", d.embedding_dim, query.dim)
    if query.weights_fingerprint != d.weights_fingerprint:
        return CompatibilityIssue(
            "weights_fingerprint", d.weights_fingerprint, query.weights_fingerprint
        )
    return None


def require_compatible(index: FeatureIndex, query: EmbeddingVector) -> None:
    issue = validate_compatibility(index, query)
    if issue is not None:
        raise BackendMismatch(issue.field, issue.expected, issue.actual)


def _load_record(record: DocumentRecord) -> np.ndarray:
    return load_image(record.image_uri)


def build_index(
    corpus: list[DocumentRecord],
    backend: EmbeddingBackend,
    workers: int = 1,
) -> IndexBuildResult:
    """Embed every corpus document into a doc_id-sorted index.

    Per-document failures (unreadable or undecodable files) go into the
    build report instead of aborting; only an empty result is fatal.
    """
    if not corpus:
        raise EmptyCorpus("corpus manifest is empty")
    seen = set()
    for record in corpus:
        if record.doc_id in seen:
            raise DuplicateDocId(record.doc_id)
        seen.add(record.doc_id)

    ordered = sorted(corpus, key=lambda r: r.doc_id)

    def embed_one(record: DocumentRecord):
        try:
            return embed(_load_record(record), backend), None
        except Exception as exc:
            return None, DocumentFailure(doc_id=record.doc_id, error=str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(embed_one, ordered))
    else:
        outcomes = [embed_one(record) for record in ordered]

    doc_ids = []
    rows = []
    failures = []
    for record, (vector, failure) in zip(ordered, outcomes):
        if failure is not None:
            failures.append(failure)
        else:
            doc_ids.append(record.doc_id)
            rows.append(vector.values)
    if not doc_ids:
        raise AllDocumentsFailed(
            f"all {len(corpus)} documents failed to embed; first: {failures[0].error}"
        )

    descriptor = backend.descriptor
    index = FeatureIndex(
        descriptor=descriptor,
        doc_ids=tuple(doc_ids),
        vectors=np.vstack(rows).astype(np.float32),
        build_timestamp=datetime.now(timezone.utc).isoformat(),
        corpus_fingerprint=corpus_fingerprint(doc_ids),
    )
    return IndexBuildResult(index=index, failures=tuple(failures))


def index_from_vectors(
    descriptor: BackendDescriptor,
    entries: list[tuple[str, np.ndarray]],
    build_timestamp: str | None = None,
) -> FeatureIndex:
    """Assemble an index from precomputed (doc_id, vector) pairs."""
    ordered = sorted(entries, key=lambda e: e[0])
    doc_ids = [doc_id for doc_id, _ in ordered]
    if len(set(doc_ids)) != len(doc_ids):
        duplicate = next(d for i, d in enumerate(doc_ids) if d in doc_ids[:i])
        raise DuplicateDocId(duplicate)
    if not ordered:
        raise EmptyCorpus("no entries")
    vectors = np.vstack([np.asarray(v, dtype=np.float32) for _, v in ordered])
    return FeatureIndex(
        descriptor=descriptor,
        doc_ids=tuple(doc_ids),
        vectors=vectors,
        build_timestamp=build_timestamp
        or datetime.now(timezone.utc).isoformat(),
        corpus_fingerprint=corpus_fingerprint(doc_ids),
    )


def _serialize(index: FeatureIndex) -> bytes:
    header = json.dumps(
        {
            "descriptor": index.descriptor.to_dict(),
            "build_timestamp": index.build_timestamp,
            "corpus_fingerprint": index.corpus_fingerprint,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(header)),
        header,
        struct.pack("<Q", len(index.doc_ids)),
    ]
    for position, doc_id in enumerate(index.doc_ids):
        encoded = doc_id.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(index.vectors[position].astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", crc32c(body))


def save_index(index: FeatureIndex, path: str | Path) -> None:
    try:
        Path(path).write_bytes(_serialize(index))
    except OSError as exc:
        raise IoFailure(f"cannot write index to {path}: {exc}") from exc


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.data):
            raise CorruptIndex("index file is truncated")
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_index(path: str | Path) -> FeatureIndex:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read index from {path}: {exc}") from exc
    if len(data) < len(MAGIC) + 4 + 4:
        raise CorruptIndex("index file is too short")
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptIndex("bad magic; not an index file")

    stored_crc = struct.unpack("<I", data[-4:])[0]
    if crc32c(data[:-4]) != stored_crc:
        raise CorruptIndex("checksum mismatch")

    cursor = _Cursor(data[:-4])
    cursor.take(len(MAGIC))
    version = cursor.u32()
    if version > FORMAT_VERSION:
        raise VersionUnsupported(
            f"index format version {version} is newer than supported {FORMAT_VERSION}"
        )
    try:
        header = json.loads(cursor.take(cursor.u32()).decode("utf-8"))
        descriptor = BackendDescriptor.from_dict(header["descriptor"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptIndex(f"bad header block: {exc}") from exc

    count = cursor.u64()
    dim = descriptor.embedding_dim
    doc_ids = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for position in range(count):
        try:
            doc_id = cursor.take(cursor.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptIndex(f"bad doc_id encoding: {exc}") from exc
        doc_ids.append(doc_id)
        vectors[position] = np.frombuffer(cursor.take(dim * 4), dtype="<f4")
    if cursor.offset != len(cursor.data):
        raise CorruptIndex("trailing bytes after last entry")

    index = FeatureIndex(
        descriptor=descriptor,
        doc_ids=tuple(doc_ids),
        vectors=vectors,
        build_timestamp=header.get("build_timestamp", ""),
        corpus_fingerprint=header.get("corpus_fingerprint", ""),
    )
    if index.corpus_fingerprint != corpus_fingerprint(list(doc_ids)):
        raise CorruptIndex("corpus fingerprint does not match stored doc_ids")
    return index


def load_manifest(path: str | Path) -> list[DocumentRecord]:
    """Read a JSONL corpus manifest of {doc_id, image_uri, attributes?}."""
    records = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    base = Path(path).parent
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            uri = raw["image_uri"]
            if "://" not in uri and not Path(uri).is_absolute():
                uri = str(base / uri)
            records.append(
                DocumentRecord(
                    doc_id=raw["doc_id"],
                    image_uri=uri,
                    attributes=frozenset(raw["attributes"])
                    if raw.get("attributes") is not None
                    else None,
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise IoFailure(f"{path}:{lineno}: malformed record: {exc}") from exc
        if records[-1].doc_id in seen:
            raise DuplicateDocId(records[-1].doc_id)
        seen.add(records[-1].doc_id)
    return records
