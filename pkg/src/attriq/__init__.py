"""attriq: attribute-conditioned query-by-example retrieval for document images.

The pipeline in one sentence: an attribute query becomes a text prompt, a
text-to-image provider renders candidate query images, a CNN backend embeds
them alongside the indexed corpus, and a linear scan ranks documents from
least to most dissimilar.
"""

from __future__ import annotations

from .backends import (
    BackendDescriptor,
    EmbeddingBackend,
    EmbeddingVector,
    OnnxBackend,
    TestBackend,
    embed,
    embed_batch,
    load_backend_descriptor,
    parse_backend_spec,
)
from .config import AppConfig, ProviderConfig, ServerConfig, default_config, load_config
from .errors import AttriqError
from .evaluation import (
    DEFAULT_PRECISION_KS,
    AggregateRow,
    EvaluationReport,
    FailedCell,
    GroundTruth,
    MetricsRow,
    aggregate_mean_std,
    is_relevant,
    precision_at_k,
    r_precision,
    relevant_count,
    run_grid,
    score_index_grid,
    score_query,
)
from .generation import (
    GeneratedImage,
    GenerationProvider,
    HttpProvider,
    HttpProviderSettings,
    MockProvider,
    generate,
    mock_render,
)
from .imaging import decode_image, load_image, preprocess, resize_bilinear
from .indexing import (
    DocumentRecord,
    FeatureIndex,
    IndexBuildResult,
    build_index,
    corpus_fingerprint,
    index_from_vectors,
    load_index,
    load_manifest,
    save_index,
    validate_compatibility,
)
from .pipeline import (
    CandidateCache,
    CandidateRef,
    RetrievalPipeline,
    RetrievalRequest,
    RetrievalResponse,
    StepTimings,
    generate_with_cache,
    retrieve,
)
from .prompts import GenerationSettings, PromptSpec, build_prompt
from .reporting import ReportFormat, emit_report, format_mean_std, report_from_json
from .similarity import (
    AggregationMode,
    DissimilarityMeasure,
    RankedEntry,
    RankedList,
    aggregate_multi_query,
    cosine_distance,
    dissimilarity,
    l1,
    l2,
    rank,
)
from .vocab import (
    Attribute,
    AttributeQuery,
    load_queries,
    load_vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateRow",
    "AggregationMode",
    "AppConfig",
    "Attribute",
    "AttributeQuery",
    "AttriqError",
    "BackendDescriptor",
    "CandidateCache",
    "CandidateRef",
    "DEFAULT_PRECISION_KS",
    "DissimilarityMeasure",
    "DocumentRecord",
    "EmbeddingBackend",
    "EmbeddingVector",
    "EvaluationReport",
    "FailedCell",
    "FeatureIndex",
    "GeneratedImage",
    "GenerationProvider",
    "GenerationSettings",
    "GroundTruth",
    "HttpProvider",
    "HttpProviderSettings",
    "IndexBuildResult",
    "MetricsRow",
    "MockProvider",
    "OnnxBackend",
    "PromptSpec",
    "ProviderConfig",
    "RankedEntry",
    "RankedList",
    "ReportFormat",
    "RetrievalPipeline",
    "RetrievalRequest",
    "RetrievalResponse",
    "StepTimings",
    "ServerConfig",
    "TestBackend",
    "aggregate_mean_std",
    "aggregate_multi_query",
    "build_index",
    "build_prompt",
    "corpus_fingerprint",
    "cosine_distance",
    "decode_image",
    "default_config",
    "dissimilarity",
    "embed",
    "embed_batch",
    "emit_report",
    "format_mean_std",
    "generate_with_cache",
    "generate",
    "index_from_vectors",
    "is_relevant",
    "l1",
    "l2",
    "load_backend_descriptor",
    "load_config",
    "load_image",
    "load_index",
    "load_manifest",
    "load_queries",
    "load_vocabulary",
    "mock_render",
    "parse_backend_spec",
    "precision_at_k",
    "preprocess",
    "r_precision",
    "rank",
    "relevant_count",
    "report_from_json",
    "resize_bilinear",
    "retrieve",
    "run_grid",
    "save_index",
    "score_index_grid",
    "score_query",
    "validate_compatibility",
]
