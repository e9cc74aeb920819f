"""Relevance judgment, precision metrics, and the benchmark grid runner.

A document is relevant to a query iff every positive attribute is present
and no negative attribute is. Precision@k counts relevant documents in the
top k; R-precision is precision@R with R the number of relevant documents
in the whole corpus. Aggregation over queries reports the arithmetic mean
and the sample standard deviation (n-1 denominator).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .backends import EmbeddingBackend, EmbeddingVector, embed
from .errors import (
    EmptyInput,
    KTooLarge,
    NoRelevantDocuments,
    RankedListTooShort,
    UnlabeledDocument,
)
from .generation import GeneratedImage
from .indexing import DocumentRecord, FeatureIndex, build_index
from .similarity import (
    AggregationMode,
    DissimilarityMeasure,
    RankedList,
    aggregate_multi_query,
)
from .vocab import AttributeQuery

DEFAULT_PRECISION_KS = (3, 10, 25)


@dataclass(frozen=True)
class GroundTruth:
    labels: dict[str, frozenset[str]]

    def __post_init__(self):
        object.__setattr__(
            self,
            "labels",
            {doc_id: frozenset(attrs) for doc_id, attrs in self.labels.items()},
        )

    @classmethod
    def from_corpus(cls, corpus: list[DocumentRecord]) -> GroundTruth:
        return cls(
            labels={
                record.doc_id: record.attributes or frozenset()
                for record in corpus
            }
        )

    def attributes_of(self, doc_id: str) -> frozenset[str]:
        if doc_id not in self.labels:
            raise UnlabeledDocument(doc_id)
        return self.labels[doc_id]


def is_relevant(doc_attributes: frozenset[str] | set[str], query: AttributeQuery) -> bool:
    """True iff all positives are present and no negative is."""
    attrs = frozenset(doc_attributes)
    return query.positives <= attrs and not (query.negatives & attrs)


def relevant_count(truth: GroundTruth, query: AttributeQuery) -> int:
    return sum(1 for attrs in truth.labels.values() if is_relevant(attrs, query))


def precision_at_k(
    ranked: RankedList, truth: GroundTruth, query: AttributeQuery, k: int
) -> float:
    """Fraction of the top k ranked documents that are relevant."""
    if not 1 <= k <= len(ranked.entries):
        raise KTooLarge(f"k={k} outside 1..{len(ranked.entries)}")
    hits = sum(
        1
        for entry in ranked.entries[:k]
        if is_relevant(truth.attributes_of(entry.doc_id), query)
    )
    return hits / k


def r_precision(ranked: RankedList, truth: GroundTruth, query: AttributeQuery) -> float:
    """precision@R where R counts relevant documents corpus-wide."""
    r = relevant_count(truth, query)
    if r == 0:
        raise NoRelevantDocuments(
            f"query {query.query_id!r} has no relevant documents in the corpus"
        )
    if len(ranked.entries) < r:
        raise RankedListTooShort(
            f"ranking has {len(ranked.entries)} entries but R={r}"
        )
    return precision_at_k(ranked, truth, query, r)


def aggregate_mean_std(values: list[float]) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation; 0 when n = 1."""
    if not values:
        raise EmptyInput("cannot aggregate an empty list")
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = 0.0 if len(arr) == 1 else float(arr.std(ddof=1))
    return mean, std


@dataclass(frozen=True)
class MetricsRow:
    query_id: str
    measure: DissimilarityMeasure
    backend_id: str
    precisions: dict[int, float]
    r_precision: float
    relevant_count: int

    def __post_init__(self):
        for k, value in self.precisions.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"precision@{k}={value} outside [0,1]")
        if not 0.0 <= self.r_precision <= 1.0:
            raise ValueError(f"r_precision={self.r_precision} outside [0,1]")
        if self.relevant_count < 1:
            raise ValueError("relevant_count must be >= 1")


@dataclass(frozen=True)
class AggregateRow:
    backend_id: str
    measure: DissimilarityMeasure
    precisions: dict[int, tuple[float, float]]  # k -> (mean, std)
    r_precision: tuple[float, float]
    query_count: int


@dataclass(frozen=True)
class FailedCell:
    backend_id: str
    measure: DissimilarityMeasure
    error: str


@dataclass(frozen=True)
class EvaluationReport:
    per_query: tuple[MetricsRow, ...]
    aggregates: tuple[AggregateRow, ...]
    corpus_fingerprint: str
    timestamp: str
    precision_ks: tuple[int, ...] = DEFAULT_PRECISION_KS
    failed_cells: tuple[FailedCell, ...] = field(default_factory=tuple)


def score_query(
    ranked: RankedList,
    truth: GroundTruth,
    query: AttributeQuery,
    backend_id: str,
    ks: tuple[int, ...] = DEFAULT_PRECISION_KS,
) -> MetricsRow:
    return MetricsRow(
        query_id=query.query_id,
        measure=ranked.measure,
        backend_id=backend_id,
        precisions={k: precision_at_k(ranked, truth, query, k) for k in ks},
        r_precision=r_precision(ranked, truth, query),
        relevant_count=relevant_count(truth, query),
    )


def _aggregate_rows(
    rows: list[MetricsRow], ks: tuple[int, ...]
) -> AggregateRow:
    first = rows[0]
    return AggregateRow(
        backend_id=first.backend_id,
        measure=first.measure,
        precisions={
            k: aggregate_mean_std([row.precisions[k] for row in rows]) for k in ks
        },
        r_precision=aggregate_mean_std([row.r_precision for row in rows]),
        query_count=len(rows),
    )


def score_index_grid(
    indexes: dict[str, FeatureIndex],
    query_embeddings: dict[str, dict[str, list[EmbeddingVector]]],
    truth: GroundTruth,
    queries: list[AttributeQuery],
    measures: list[DissimilarityMeasure],
    ks: tuple[int, ...] = DEFAULT_PRECISION_KS,
    aggregation: AggregationMode = AggregationMode.MEAN,
) -> EvaluationReport:
    """Score every (backend, measure) cell given per-backend indexes and
    per-backend per-query embedded query images.

    ``query_embeddings`` maps backend_id -> query_id -> embeddings. Failing
    cells are recorded and skipped; rows come back sorted by (backend_id,
    measure) so concurrent evaluation cannot change the output.
    """
    if not indexes or not queries or not measures:
        raise EmptyInput("need at least one backend, query, and measure")
    per_query: list[MetricsRow] = []
    aggregates: list[AggregateRow] = []
    failed: list[FailedCell] = []
    fingerprints = {index.corpus_fingerprint for index in indexes.values()}

    for backend_id in sorted(indexes):
        index = indexes[backend_id]
        for measure in sorted(measures, key=lambda m: m.value):
            try:
                rows = []
                for query in queries:
                    embeddings = query_embeddings[backend_id][query.query_id]
                    ranked = aggregate_multi_query(
                        embeddings, index, measure, mode=aggregation
                    )
                    rows.append(score_query(ranked, truth, query, backend_id, ks))
            except Exception as exc:
                failed.append(
                    FailedCell(backend_id=backend_id, measure=measure, error=str(exc))
                )
                continue
            per_query.extend(rows)
            aggregates.append(_aggregate_rows(rows, ks))

    return EvaluationReport(
        per_query=tuple(per_query),
        aggregates=tuple(aggregates),
        corpus_fingerprint=fingerprints.pop() if len(fingerprints) == 1 else "mixed",
        timestamp=datetime.now(timezone.utc).isoformat(),
        precision_ks=ks,
        failed_cells=tuple(failed),
    )


def run_grid(
    corpus: list[DocumentRecord],
    truth: GroundTruth,
    queries: list[AttributeQuery],
    query_images: dict[str, list[GeneratedImage]],
    backends: list[EmbeddingBackend],
    measures: list[DissimilarityMeasure],
    ks: tuple[int, ...] = DEFAULT_PRECISION_KS,
    aggregation: AggregationMode = AggregationMode.MEAN,
    workers: int = 1,
) -> EvaluationReport:
    """Build one index per backend, embed the query images, and score the
    full backend x measure grid."""
    if not corpus or not queries or not backends or not measures:
        raise EmptyInput("corpus, queries, backends, and measures must be non-empty")
    for query in queries:
        if not query_images.get(query.query_id):
            raise EmptyInput(f"query {query.query_id!r} has no query images")

    def prepare(backend: EmbeddingBackend):
        index = build_index(corpus, backend).index
        embedded = {
            query.query_id: [
                embed(image.image_bytes, backend)
                for image in query_images[query.query_id]
            ]
            for query in queries
        }
        return backend.descriptor.backend_id, index, embedded

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            prepared = list(pool.map(prepare, backends))
    else:
        prepared = [prepare(backend) for backend in backends]

    indexes = {backend_id: index for backend_id, index, _ in prepared}
    query_embeddings = {backend_id: embedded for backend_id, _, embedded in prepared}
    return score_index_grid(
        indexes, query_embeddings, truth, queries, measures, ks, aggregation
    )
