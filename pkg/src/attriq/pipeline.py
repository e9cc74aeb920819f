"""End-to-end retrieval orchestration.

One entry point, three query sources: an attribute query (prompt built and
sent to the generation provider), a prompt override (skips prompt building),
or a raw query image (classic query-by-example, skips generation entirely).
Generated candidates are cached on disk by (prompt fingerprint, seed) so
refinement loops never re-bill the provider for an identical request.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .backends import EmbeddingBackend, EmbeddingVector, embed
from .errors import InvalidRequest, RetrievalStepError
from .generation import GeneratedImage, GenerationProvider, generate
from .indexing import FeatureIndex
from .prompts import GenerationSettings, PromptSpec, build_prompt
from .similarity import (
    AggregationMode,
    DissimilarityMeasure,
    RankedList,
    aggregate_multi_query,
)
from .vocab import Attribute, AttributeQuery

DEFAULT_PREAMBLE = "a full page of a historical document"


@dataclass(frozen=True)
class RetrievalRequest:
    """Exactly one of attribute_query / prompt_override / query_image."""

    measure: DissimilarityMeasure
    k: int
    attribute_query: AttributeQuery | None = None
    prompt_override: PromptSpec | None = None
    query_image: bytes | None = None
    num_candidates: int = 1
    aggregation_mode: AggregationMode = AggregationMode.MEAN
    candidate_selection: tuple[int, ...] | None = None

    def __post_init__(self):
        sources = [
            self.attribute_query is not None,
            self.prompt_override is not None,
            self.query_image is not None,
        ]
        if sum(sources) != 1:
            raise InvalidRequest(
                "exactly one of attribute_query, prompt_override, query_image required"
            )
        if self.k < 1:
            raise InvalidRequest("k must be >= 1")
        if self.num_candidates < 1:
            raise InvalidRequest("num_candidates must be >= 1")
        if self.candidate_selection is not None:
            object.__setattr__(
                self, "candidate_selection", tuple(self.candidate_selection)
            )
            if not self.candidate_selection:
                raise InvalidRequest("candidate_selection must not be empty")


@dataclass(frozen=True)
class CandidateRef:
    prompt_fingerprint: str
    seed: int | None
    position: int
    provider_id: str


@dataclass(frozen=True)
class StepTimings:
    generation_ms: float = 0.0
    embedding_ms: float = 0.0
    scan_ms: float = 0.0


@dataclass(frozen=True)
class RetrievalResponse:
    ranked: RankedList
    image_uris: dict[str, str]
    generated_candidates: tuple[CandidateRef, ...]
    prompt_used: PromptSpec | None
    timings: StepTimings


class CandidateCache:
    """Disk cache of generated candidates keyed by (fingerprint, seed)."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, fingerprint: str, seed: int | None) -> Path:
        suffix = "x" if seed is None else str(seed)
        return self.directory / f"{fingerprint}_{suffix}.png"

    def get(self, fingerprint: str, seed: int | None) -> bytes | None:
        path = self._path(fingerprint, seed)
        return path.read_bytes() if path.is_file() else None

    def put(self, image: GeneratedImage) -> None:
        self._path(image.prompt_fingerprint, image.seed).write_bytes(
            image.image_bytes
        )


def generate_with_cache(
    spec: PromptSpec,
    provider: GenerationProvider,
    cache: CandidateCache | None,
) -> list[GeneratedImage]:
    """Serve all candidates from cache when possible, else call the provider
    once and cache what it returns."""
    if cache is not None:
        fingerprint = spec.fingerprint()
        base = spec.settings.seed
        if base is not None:
            cached = [
                cache.get(fingerprint, base + i)
                for i in range(spec.settings.num_images)
            ]
            if all(blob is not None for blob in cached):
                return [
                    GeneratedImage(
                        image_bytes=blob,
                        provider_id="cache",
                        prompt_fingerprint=fingerprint,
                        created_at="",
                        seed=base + i,
                    )
                    for i, blob in enumerate(cached)
                ]
    images = generate(spec, provider)
    if cache is not None:
        for image in images:
            if image.seed is not None:
                cache.put(image)
    return images


@dataclass
class RetrievalPipeline:
    """Holds the loaded components a retrieval run needs."""

    index: FeatureIndex
    backend: EmbeddingBackend
    provider: GenerationProvider | None = None
    vocabulary: dict[str, Attribute] = field(default_factory=dict)
    preamble: str = DEFAULT_PREAMBLE
    settings: GenerationSettings = field(default_factory=GenerationSettings)
    cache: CandidateCache | None = None
    uri_resolver: Callable[[str], str] = lambda doc_id: f"/api/doc/{doc_id}/image"

    def _prompt_for(self, request: RetrievalRequest) -> PromptSpec:
        if request.prompt_override is not None:
            return request.prompt_override
        settings = GenerationSettings(
            **{
                **self.settings.to_dict(),
                "num_images": request.num_candidates,
            }
        )
        return build_prompt(
            request.attribute_query, self.vocabulary, self.preamble, settings
        )

    def retrieve(self, request: RetrievalRequest) -> RetrievalResponse:
        candidates: list[GeneratedImage] = []
        prompt_used: PromptSpec | None = None
        generation_ms = 0.0

        if request.query_image is not None:
            rasters = [request.query_image]
        else:
            if self.provider is None:
                raise RetrievalStepError(
                    "generation", InvalidRequest("no generation provider configured")
                )
            started = time.perf_counter()
            try:
                prompt_used = self._prompt_for(request)
                candidates = generate_with_cache(prompt_used, self.provider, self.cache)
            except Exception as exc:
                raise RetrievalStepError("generation", exc) from exc
            generation_ms = (time.perf_counter() - started) * 1000.0

            selection = request.candidate_selection
            if selection is not None:
                if any(not 0 <= i < len(candidates) for i in selection):
                    raise RetrievalStepError(
                        "generation",
                        InvalidRequest(
                            f"candidate_selection out of range 0..{len(candidates) - 1}"
                        ),
                    )
                rasters = [candidates[i].image_bytes for i in selection]
            else:
                rasters = [image.image_bytes for image in candidates]

        started = time.perf_counter()
        try:
            embeddings: list[EmbeddingVector] = [
                embed(raster, self.backend) for raster in rasters
            ]
        except Exception as exc:
            raise RetrievalStepError("embedding", exc) from exc
        embedding_ms = (time.perf_counter() - started) * 1000.0

        started = time.perf_counter()
        try:
            ranked = aggregate_multi_query(
                embeddings,
                self.index,
                request.measure,
                mode=request.aggregation_mode,
                k=request.k,
            )
        except Exception as exc:
            raise RetrievalStepError("scan", exc) from exc
        scan_ms = (time.perf_counter() - started) * 1000.0

        return RetrievalResponse(
            ranked=ranked,
            image_uris={
                entry.doc_id: self.uri_resolver(entry.doc_id)
                for entry in ranked.entries
            },
            generated_candidates=tuple(
                CandidateRef(
                    prompt_fingerprint=image.prompt_fingerprint,
                    seed=image.seed,
                    position=position,
                    provider_id=image.provider_id,
                )
                for position, image in enumerate(candidates)
            ),
            prompt_used=prompt_used,
            timings=StepTimings(
                generation_ms=generation_ms,
                embedding_ms=embedding_ms,
                scan_ms=scan_ms,
            ),
        )


def retrieve(
    request: RetrievalRequest,
    index: FeatureIndex,
    backend: EmbeddingBackend,
    provider: GenerationProvider | None = None,
    **kwargs,
) -> RetrievalResponse:
    """Functional entry point; see :class:`RetrievalPipeline`."""
    pipeline = RetrievalPipeline(
        index=index, backend=backend, provider=provider, **kwargs
    )
    return pipeline.retrieve(request)
