"""Index construction, the binary file format, and compatibility checks."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pytest

from attriq import (
    BackendDescriptor,
    DocumentRecord,
    FeatureIndex,
    TestBackend,
    build_index,
    corpus_fingerprint,
    index_from_vectors,
    load_index,
    load_manifest,
    save_index,
    validate_compatibility,
)
from attriq.backends import EmbeddingVector
from attriq.errors import (
    AllDocumentsFailed,
    BackendMismatch,
    CorruptIndex,
    DuplicateDocId,
    EmptyCorpus,
    IoFailure,
    VersionUnsupported,
)
from attriq.indexing import FORMAT_VERSION, MAGIC, require_compatible

from conftest import write_corpus


def _descriptor(dim=4) -> BackendDescriptor:
    base = TestBackend().descriptor.to_dict()
    base["embedding_dim"] = dim
    return BackendDescriptor(**base)


def _random_index(rng, docs=5, dim=4) -> FeatureIndex:
    entries = [
        (f"doc{i:05d}", rng.normal(size=dim).astype(np.float32)) for i in range(docs)
    ]
    return index_from_vectors(_descriptor(dim), entries)


# --- building ------------------------------------------------------------


def test_build_index_from_manifest(corpus_manifest):
    corpus = load_manifest(corpus_manifest)
    result = build_index(corpus, TestBackend())
    assert len(result.index) == 12
    assert result.failures == ()
    assert list(result.index.doc_ids) == sorted(result.index.doc_ids)
    assert result.index.corpus_fingerprint == corpus_fingerprint(
        [r.doc_id for r in corpus]
    )


def test_build_index_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_index([], TestBackend())


def test_build_index_duplicate_doc_id(tmp_path, corpus_manifest):
    corpus = load_manifest(corpus_manifest)
    with pytest.raises(DuplicateDocId):
        build_index(corpus + [corpus[0]], TestBackend())


def test_build_index_records_per_document_failures(tmp_path):
    manifest = write_corpus(tmp_path / "c", 3, seed=1)
    corpus = load_manifest(manifest)
    broken = tmp_path / "c" / "broken.png"
    broken.write_bytes(b"not a png")
    corpus.append(DocumentRecord(doc_id="zzz-broken", image_uri=str(broken)))
    result = build_index(corpus, TestBackend())
    assert len(result.index) == 3
    assert len(result.failures) == 1
    assert result.failures[0].doc_id == "zzz-broken"


def test_build_index_all_failed(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"junk")
    corpus = [DocumentRecord(doc_id="only", image_uri=str(bad))]
    with pytest.raises(AllDocumentsFailed):
        build_index(corpus, TestBackend())


def test_build_index_parallel_matches_serial(corpus_manifest):
    corpus = load_manifest(corpus_manifest)
    serial = build_index(corpus, TestBackend(), workers=1).index
    parallel = build_index(corpus, TestBackend(), workers=4).index
    # Timestamps legitimately differ between two builds; the content must not.
    assert serial.descriptor == parallel.descriptor
    assert serial.doc_ids == parallel.doc_ids
    assert serial.corpus_fingerprint == parallel.corpus_fingerprint
    assert np.array_equal(serial.vectors, parallel.vectors)


def test_index_rejects_unsorted_doc_ids():
    with pytest.raises(ValueError):
        FeatureIndex(
            descriptor=_descriptor(2),
            doc_ids=("b", "a"),
            vectors=np.zeros((2, 2), dtype=np.float32),
            build_timestamp="t",
            corpus_fingerprint=corpus_fingerprint(["a", "b"]),
        )


def test_vector_for_returns_row():
    rng = np.random.default_rng(1)
    index = _random_index(rng, docs=4)
    vector = index.vector_for("doc00002")
    assert isinstance(vector, EmbeddingVector)
    assert np.array_equal(vector.values, index.vectors[2])


# --- file format ---------------------------------------------------------


def test_round_trip_is_equal_and_file_is_stable(tmp_path):
    rng = np.random.default_rng(2)
    index = _random_index(rng, docs=17, dim=9)
    path_a = tmp_path / "a.idx"
    path_b = tmp_path / "b.idx"
    save_index(index, path_a)
    loaded = load_index(path_a)
    assert loaded == index
    assert loaded.build_timestamp == index.build_timestamp
    assert loaded.descriptor == index.descriptor
    # re-serializing the loaded object writes identical bytes
    save_index(loaded, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()


def test_round_trip_preserves_exact_float_bits(tmp_path):
    # adversarial values: denormals, negative zero, extremes of float32
    values = np.array(
        [[0.0, -0.0, 1e-45, -1e-45], [3.4e38, -3.4e38, 1.5e-39, 7.0]],
        dtype=np.float32,
    )
    index = index_from_vectors(_descriptor(4), [("a", values[0]), ("b", values[1])])
    path = tmp_path / "bits.idx"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.vectors.tobytes() == index.vectors.tobytes()


def test_unicode_doc_ids_round_trip(tmp_path):
    entries = [
        ("doc-élégant", np.ones(3, dtype=np.float32)),
        ("doc-文書", np.zeros(3, dtype=np.float32)),
    ]
    index = index_from_vectors(_descriptor(3), entries)
    path = tmp_path / "u.idx"
    save_index(index, path)
    assert load_index(path) == index


def test_corrupted_byte_rejected(tmp_path):
    rng = np.random.default_rng(3)
    index = _random_index(rng, docs=6, dim=5)
    path = tmp_path / "c.idx"
    save_index(index, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptIndex):
        load_index(path)


def test_truncated_file_rejected(tmp_path):
    rng = np.random.default_rng(4)
    index = _random_index(rng)
    path = tmp_path / "t.idx"
    save_index(index, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 7])
    with pytest.raises(CorruptIndex):
        load_index(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.idx"
    path.write_bytes(b"NOTANIDX" + b"\x00" * 64)
    with pytest.raises(CorruptIndex):
        load_index(path)


def test_future_version_rejected(tmp_path):
    rng = np.random.default_rng(5)
    index = _random_index(rng)
    path = tmp_path / "v.idx"
    save_index(index, path)
    blob = bytearray(path.read_bytes())
    # bump the version field, then rewrite the trailing checksum to match
    struct.pack_into("<I", blob, len(MAGIC), FORMAT_VERSION + 1)
    from attriq._crc32c import crc32c

    blob[-4:] = struct.pack("<I", crc32c(bytes(blob[:-4])))
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionUnsupported):
        load_index(path)


def test_missing_file_is_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        load_index(tmp_path / "absent.idx")


def test_fingerprint_mismatch_rejected(tmp_path):
    rng = np.random.default_rng(6)
    index = _random_index(rng, docs=3, dim=2)
    path = tmp_path / "f.idx"
    save_index(index, path)
    blob = bytearray(path.read_bytes())
    # swap the stored corpus fingerprint for a syntactically valid fake,
    # fixing the checksum so only the semantic check can catch it
    text = bytes(blob).decode("latin-1")
    original = index.corpus_fingerprint
    fake = ("0" * len(original)) if original[0] != "0" else ("1" * len(original))
    mutated = text.replace(original, fake).encode("latin-1")
    from attriq._crc32c import crc32c

    blob = bytearray(mutated)
    blob[-4:] = struct.pack("<I", crc32c(bytes(blob[:-4])))
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptIndex):
        load_index(path)


# --- compatibility -------------------------------------------------------


def _query(dim=4, backend="test", weights="test") -> EmbeddingVector:
    return EmbeddingVector(
        backend_id=backend,
        dim=dim,
        values=np.ones(dim, dtype=np.float32),
        weights_fingerprint=weights,
    )


def test_compatible_query_passes():
    rng = np.random.default_rng(7)
    index = _random_index(rng, dim=4)
    assert validate_compatibility(index, _query()) is None
    require_compatible(index, _query())


def test_backend_id_mismatch_reported_first():
    rng = np.random.default_rng(8)
    index = _random_index(rng, dim=4)
    issue = validate_compatibility(index, _query(backend="other", weights="x"))
    assert issue is not None
    assert issue.field == "backend_id"


def test_dimension_mismatch_detected():
    rng = np.random.default_rng(9)
    index = _random_index(rng, dim=4)
    issue = validate_compatibility(index, _query(dim=8))
    assert issue is not None
    assert issue.field == "dim"
    with pytest.raises(BackendMismatch):
        require_compatible(index, _query(dim=8))


def test_weights_mismatch_detected():
    rng = np.random.default_rng(10)
    index = _random_index(rng, dim=4)
    issue = validate_compatibility(index, _query(weights="retrained"))
    assert issue is not None
    assert issue.field == "weights_fingerprint"


# --- manifest loader -----------------------------------------------------


def test_load_manifest_resolves_relative_uris(tmp_path):
    manifest = write_corpus(tmp_path / "c", 2, seed=11)
    corpus = load_manifest(manifest)
    assert len(corpus) == 2
    for record in corpus:
        assert (tmp_path / "c") in Path(record.image_uri).parents


def test_load_manifest_keeps_attributes(tmp_path):
    manifest = write_corpus(tmp_path / "c", 4, seed=12)
    corpus = load_manifest(manifest)
    by_id = {r.doc_id: r for r in corpus}
    assert by_id["doc0000"].attributes == frozenset({"handwritten", "deterioration"})
    assert by_id["doc0001"].attributes == frozenset({"printed"})


def test_load_manifest_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "m.jsonl"
    line = json.dumps({"doc_id": "a", "image_uri": "a.png"})
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(DuplicateDocId):
        load_manifest(path)
