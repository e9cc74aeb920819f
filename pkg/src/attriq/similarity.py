"""Dissimilarity measures and least-to-most-dissimilar ranking.

All arithmetic happens in float64 regardless of the float32 storage of the
index. Cosine distance is computed as 1 - dot(a,b)/sqrt(dot(a,a)*dot(b,b))
with all three dot products reduced by the same summation routine, so two
bitwise-equal vectors score exactly 0.0; the result is clamped to [0, 2]
against floating-point overshoot.

Ranking is a full linear scan ordered ascending by dissimilarity with ties
broken by doc_id ascending; because index entries are stored doc_id-sorted,
a stable sort on the distances alone realizes the tie rule.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .backends import EmbeddingVector
from .errors import DimensionMismatch, EmptyQuerySet, KTooLarge, ZeroVector
from .indexing import FeatureIndex, require_compatible


class DissimilarityMeasure(str, Enum):
    L1 = "l1"
    L2 = "l2"
    COSINE = "cosine"

    @classmethod
    def parse(cls, value: str) -> DissimilarityMeasure:
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(
                f"unknown measure {value!r}; expected one of {[m.value for m in cls]}"
            ) from None


class AggregationMode(str, Enum):
    MEAN = "mean"
    MIN = "min"


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if len(a) != len(b) or len(a) == 0:
        raise DimensionMismatch(
            f"incompatible vector dimensions {len(a)} and {len(b)}"
        )
    return a, b


def l1(a, b) -> float:
    """Sum of absolute component differences."""
    a, b = _pair(a, b)
    return float(np.abs(a - b).sum())


def l2(a, b) -> float:
    """Euclidean distance."""
    a, b = _pair(a, b)
    d = a - b
    return float(np.sqrt((d * d).sum()))


def cosine_distance(a, b) -> float:
    """1 - cosine similarity, clamped to [0, 2]; zero vectors are an error."""
    a, b = _pair(a, b)
    aa = float((a * a).sum())
    bb = float((b * b).sum())
    if aa == 0.0 or bb == 0.0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    ab = float((a * b).sum())
    return float(np.clip(1.0 - ab / np.sqrt(aa * bb), 0.0, 2.0))


_SCALAR = {
    DissimilarityMeasure.L1: l1,
    DissimilarityMeasure.L2: l2,
    DissimilarityMeasure.COSINE: cosine_distance,
}


def dissimilarity(a, b, measure: DissimilarityMeasure) -> float:
    return _SCALAR[measure](a, b)


@dataclass(frozen=True)
class RankedEntry:
    doc_id: str
    dissimilarity: float


@dataclass(frozen=True)
class RankedList:
    entries: tuple[RankedEntry, ...]
    measure: DissimilarityMeasure
    query_fingerprint: str

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        previous = None
        seen = set()
        for entry in self.entries:
            if entry.doc_id in seen:
                raise ValueError(f"duplicate doc_id {entry.doc_id!r} in ranking")
            seen.add(entry.doc_id)
            if previous is not None:
                if entry.dissimilarity < previous.dissimilarity:
                    raise ValueError("dissimilarities must be non-decreasing")
                if (
                    entry.dissimilarity == previous.dissimilarity
                    and entry.doc_id < previous.doc_id
                ):
                    raise ValueError("ties must be ordered by doc_id ascending")
            previous = entry

    def doc_ids(self) -> list[str]:
        return [entry.doc_id for entry in self.entries]

    def truncated(self, k: int) -> RankedList:
        return RankedList(
            entries=self.entries[:k],
            measure=self.measure,
            query_fingerprint=self.query_fingerprint,
        )


def _distances_to_index(
    query: np.ndarray, index: FeatureIndex, measure: DissimilarityMeasure
) -> np.ndarray:
    matrix = index.vectors.astype(np.float64)
    q = query.astype(np.float64)
    if measure is DissimilarityMeasure.L1:
        return np.abs(matrix - q).sum(axis=1)
    if measure is DissimilarityMeasure.L2:
        d = matrix - q
        return np.sqrt((d * d).sum(axis=1))
    qq = (q * q).sum()
    if qq == 0.0:
        raise ZeroVector("query embedding is a zero vector")
    row_norms_sq = (matrix * matrix).sum(axis=1)
    zero_rows = np.flatnonzero(row_norms_sq == 0.0)
    if len(zero_rows):
        raise ZeroVector(
            f"indexed document {index.doc_ids[zero_rows[0]]!r} has a zero embedding"
        )
    dots = (matrix * q).sum(axis=1)
    return np.clip(1.0 - dots / np.sqrt(row_norms_sq * qq), 0.0, 2.0)


def _query_fingerprint(
    queries: list[EmbeddingVector], measure: DissimilarityMeasure, mode: str = ""
) -> str:
    digest = hashlib.sha256()
    digest.update(measure.value.encode())
    digest.update(mode.encode())
    for query in queries:
        digest.update(query.backend_id.encode())
        digest.update(query.values.astype("<f4").tobytes())
    return digest.hexdigest()


def _ranked_from_distances(
    distances: np.ndarray,
    index: FeatureIndex,
    measure: DissimilarityMeasure,
    fingerprint: str,
    k: int | None,
) -> RankedList:
    if k is not None and not 1 <= k <= len(index):
        raise KTooLarge(f"k={k} outside 1..{len(index)}")
    order = np.argsort(distances, kind="stable")  # doc_id-sorted input => ties resolve ascending
    if k is not None:
        order = order[:k]
    entries = tuple(
        RankedEntry(doc_id=index.doc_ids[i], dissimilarity=float(distances[i]))
        for i in order
    )
    return RankedList(entries=entries, measure=measure, query_fingerprint=fingerprint)


def rank(
    query: EmbeddingVector,
    index: FeatureIndex,
    measure: DissimilarityMeasure,
    k: int | None = None,
) -> RankedList:
    """Scan the index and rank documents least-to-most dissimilar."""
    require_compatible(index, query)
    distances = _distances_to_index(query.values, index, measure)
    return _ranked_from_distances(
        distances, index, measure, _query_fingerprint([query], measure), k
    )


def aggregate_multi_query(
    queries: list[EmbeddingVector],
    index: FeatureIndex,
    measure: DissimilarityMeasure,
    mode: AggregationMode = AggregationMode.MEAN,
    k: int | None = None,
) -> RankedList:
    """Rank by the mean or min of per-query dissimilarities per document."""
    if not queries:
        raise EmptyQuerySet("need at least one query embedding")
    if len(queries) == 1:
        return rank(queries[0], index, measure, k)
    for query in queries:
        require_compatible(index, query)
    stacked = np.vstack(
        [_distances_to_index(query.values, index, measure) for query in queries]
    )
    combined = stacked.mean(axis=0) if mode is AggregationMode.MEAN else stacked.min(axis=0)
    return _ranked_from_distances(
        combined,
        index,
        measure,
        _query_fingerprint(queries, measure, mode.value),
        k,
    )
