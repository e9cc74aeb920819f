"""HTTP JSON API over the retrieval pipeline.

The service loads the index once at startup and shares it read-only across
requests. Every engine error maps to exactly one HTTP status and carries a
stable machine-readable code in the response envelope:

    {"error": {"code": "K_TOO_LARGE", "type": "KTooLarge", "message": ...}}

Generation requests are serialized through a single gate so concurrent
clients cannot stampede the external provider.
"""

from __future__ import annotations

import base64
import binascii
import mimetypes
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .backends import EmbeddingBackend, embed, parse_backend_spec
from .config import AppConfig
from .errors import (
    AttriqError,
    AuthFailure,
    DimensionMismatch,
    EmptyInput,
    EmptyQuerySet,
    InvalidQuery,
    InvalidRequest,
    InvalidSettings,
    InvalidVocabulary,
    KTooLarge,
    MalformedResponse,
    NotFound,
    ProviderTimeout,
    RateLimited,
    RetrievalStepError,
    UndecodableImage,
    UnknownAttribute,
    ZeroVector,
)
from .evaluation import (
    DEFAULT_PRECISION_KS,
    GroundTruth,
    score_index_grid,
)
from .generation import GeneratedImage, GenerationProvider, HttpProvider, HttpProviderSettings, MockProvider
from .indexing import DocumentRecord, FeatureIndex, load_index, load_manifest
from .pipeline import (
    CandidateCache,
    RetrievalPipeline,
    RetrievalRequest,
    RetrievalResponse,
)
from .prompts import GenerationSettings, PromptSpec, build_prompt
from .similarity import AggregationMode, DissimilarityMeasure
from .vocab import Attribute, AttributeQuery, load_vocabulary

MAX_CANDIDATES = 16

_STATUS_BY_TYPE: dict[type, int] = {
    InvalidRequest: 400,
    InvalidQuery: 400,
    InvalidSettings: 400,
    InvalidVocabulary: 400,
    UnknownAttribute: 400,
    KTooLarge: 400,
    EmptyQuerySet: 400,
    EmptyInput: 400,
    DimensionMismatch: 400,
    ZeroVector: 400,
    UndecodableImage: 400,
    NotFound: 404,
    RateLimited: 429,
    AuthFailure: 502,
    MalformedResponse: 502,
    ProviderTimeout: 504,
}


def status_for(error: AttriqError) -> int:
    """Total mapping: engine error -> HTTP status."""
    if isinstance(error, RetrievalStepError):
        cause = error.cause
        if isinstance(cause, AttriqError):
            status = status_for(cause)
            # bad bytes from the provider are an upstream fault, not the client's
            if error.step == "generation" and isinstance(cause, UndecodableImage):
                status = 502
            return status
        return 500
    return _STATUS_BY_TYPE.get(type(error), 500)


def error_payload(error: AttriqError) -> dict:
    inner = error.cause if isinstance(error, RetrievalStepError) else error
    payload = {
        "code": inner.code if isinstance(inner, AttriqError) else "INTERNAL_ERROR",
        "type": type(inner).__name__,
        "message": str(error),
    }
    if isinstance(error, RetrievalStepError):
        payload["step"] = error.step
    return {"error": payload}


class GatedProvider:
    """Serializes provider calls; the index scan itself stays concurrent."""

    def __init__(self, inner: GenerationProvider):
        self._inner = inner
        self._gate = threading.Lock()
        self.provider_id = inner.provider_id

    def generate(self, spec: PromptSpec) -> list[GeneratedImage]:
        with self._gate:
            return self._inner.generate(spec)


@dataclass
class EvaluationJob:
    job_id: str
    status: str = "pending"  # pending | running | done | failed
    report: dict | None = None
    error: dict | None = None


@dataclass
class ServiceComponents:
    """Everything a running service needs, loadable from config or injected
    directly in tests."""

    config: AppConfig
    index: FeatureIndex
    backend: EmbeddingBackend
    vocabulary: dict[str, Attribute]
    corpus: dict[str, DocumentRecord]
    provider: GenerationProvider | None = None
    cache: CandidateCache | None = None
    settings: GenerationSettings = field(default_factory=GenerationSettings)

    def __post_init__(self):
        if self.provider is not None and not isinstance(self.provider, GatedProvider):
            self.provider = GatedProvider(self.provider)


def provider_from_config(config: AppConfig) -> GenerationProvider:
    if config.provider.kind == "mock":
        return MockProvider(default_seed=config.provider.default_seed)
    return HttpProvider(
        HttpProviderSettings(
            base_url=config.provider.base_url,
            api_key_env=config.provider.api_key_env,
            generate_path=config.provider.generate_path,
            timeout_s=config.provider.timeout_s,
        )
    )


def build_components(config: AppConfig) -> ServiceComponents:
    """Load index, backend, vocabulary, and corpus from a config; abort with
    a diagnostic when anything required is missing."""
    from .errors import ConfigError

    if not config.index_path:
        raise ConfigError("config has no index path; run `attriq index build` first")
    if not Path(config.index_path).is_file():
        raise ConfigError(f"index file not found: {config.index_path}")
    index = load_index(config.index_path)

    backend = parse_backend_spec(config.backend)

    vocabulary: dict[str, Attribute] = {}
    if config.vocabulary_path:
        vocabulary = load_vocabulary(config.vocabulary_path)

    corpus: dict[str, DocumentRecord] = {}
    if config.manifest_path:
        corpus = {record.doc_id: record for record in load_manifest(config.manifest_path)}

    return ServiceComponents(
        config=config,
        index=index,
        backend=backend,
        vocabulary=vocabulary,
        corpus=corpus,
        provider=provider_from_config(config),
        cache=CandidateCache(config.cache_dir) if config.cache_dir else None,
    )


# --- request parsing helpers --------------------------------------------


def _require(payload: dict, key: str):
    if key not in payload:
        raise InvalidRequest(f"missing required field {key!r}")
    return payload[key]


def _string_list(payload: dict, key: str) -> list[str]:
    value = payload.get(key, [])
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise InvalidRequest(f"field {key!r} must be a list of strings")
    return value


def _int_field(payload: dict, key: str, default: int, minimum: int = 1) -> int:
    value = payload.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise InvalidRequest(f"field {key!r} must be an integer >= {minimum}")
    return value


def _attribute_query(payload: dict, query_id: str = "ad-hoc") -> AttributeQuery:
    return AttributeQuery(
        query_id=str(payload.get("query_id", query_id)),
        positives=frozenset(_string_list(payload, "positives")),
        negatives=frozenset(_string_list(payload, "negatives")),
    )


def _prompt_override(payload: dict, settings: GenerationSettings) -> PromptSpec:
    positive = payload.get("positive_text")
    if not isinstance(positive, str) or not positive:
        raise InvalidRequest("prompt.positive_text must be a non-empty string")
    negative = payload.get("negative_text")
    if negative is not None and not isinstance(negative, str):
        raise InvalidRequest("prompt.negative_text must be a string or null")
    return PromptSpec(positive_text=positive, negative_text=negative or None, settings=settings)


def _measure(payload: dict) -> DissimilarityMeasure:
    raw = payload.get("measure", "l2")
    if not isinstance(raw, str):
        raise InvalidRequest("field 'measure' must be a string")
    try:
        return DissimilarityMeasure.parse(raw)
    except ValueError as exc:
        raise InvalidRequest(str(exc)) from exc


def _aggregation(payload: dict) -> AggregationMode:
    raw = payload.get("aggregation", "mean")
    if raw == "mean":
        return AggregationMode.MEAN
    if raw == "min":
        return AggregationMode.MIN
    raise InvalidRequest("field 'aggregation' must be 'mean' or 'min'")


def prompt_to_dict(spec: PromptSpec) -> dict:
    return {
        "positive_text": spec.positive_text,
        "negative_text": spec.negative_text,
        "settings": spec.settings.to_dict(),
        "fingerprint": spec.fingerprint(),
    }


def report_to_dict(report) -> dict:
    import json

    from .reporting import ReportFormat, emit_report

    return json.loads(emit_report(report, ReportFormat.JSON).decode("utf-8"))


def create_app(components: ServiceComponents) -> FastAPI:
    app = FastAPI(title="attriq", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    config = components.config
    candidate_bytes: dict[tuple[str, str], bytes] = {}
    candidate_lock = threading.Lock()
    jobs: dict[str, EvaluationJob] = {}
    jobs_lock = threading.Lock()

    class _RecordingProvider:
        """Copies generated bytes into the candidate store on the way out so
        the /api/candidate URLs in a retrieve response always resolve."""

        def __init__(self, inner: GenerationProvider):
            self._inner = inner
            self.provider_id = inner.provider_id

        def generate(self, spec: PromptSpec) -> list[GeneratedImage]:
            images = self._inner.generate(spec)
            stash_candidates(images)
            return images

    pipeline = RetrievalPipeline(
        index=components.index,
        backend=components.backend,
        provider=_RecordingProvider(components.provider)
        if components.provider is not None
        else None,
        vocabulary=components.vocabulary,
        preamble=config.preamble,
        settings=components.settings,
        cache=components.cache,
    )

    def base_settings(num_images: int, seed) -> GenerationSettings:
        overrides = components.settings.to_dict()
        overrides["num_images"] = num_images
        if seed is not None:
            if not isinstance(seed, int) or isinstance(seed, bool):
                raise InvalidRequest("field 'seed' must be an integer")
            overrides["seed"] = seed
        elif overrides.get("seed") is None:
            overrides["seed"] = config.seed
        return GenerationSettings(**overrides)

    def stash_candidates(images: list[GeneratedImage]) -> list[dict]:
        refs = []
        with candidate_lock:
            for position, image in enumerate(images):
                token = str(image.seed) if image.seed is not None else f"p{position}"
                candidate_bytes[(image.prompt_fingerprint, token)] = image.image_bytes
                refs.append(
                    {
                        "prompt_fingerprint": image.prompt_fingerprint,
                        "seed": image.seed,
                        "position": position,
                        "provider_id": image.provider_id,
                        "url": f"/api/candidate/{image.prompt_fingerprint}/{token}",
                    }
                )
            # bound the in-memory store; oldest insertions leave first
            while len(candidate_bytes) > 512:
                candidate_bytes.pop(next(iter(candidate_bytes)))
        return refs

    @app.middleware("http")
    async def token_guard(request: Request, call_next):
        token = config.server.api_token
        path = request.url.path
        if (
            token
            and path.startswith("/api/")
            and path != "/api/health"
            and request.method != "OPTIONS"
            and request.headers.get("X-API-Token") != token
        ):
            failure = AuthFailure("missing or invalid X-API-Token header")
            return JSONResponse(status_code=401, content=error_payload(failure))
        return await call_next(request)

    @app.exception_handler(AttriqError)
    async def attriq_error_handler(request: Request, error: AttriqError):
        response = JSONResponse(
            status_code=status_for(error), content=error_payload(error)
        )
        inner = error.cause if isinstance(error, RetrievalStepError) else error
        if isinstance(inner, RateLimited) and inner.retry_after is not None:
            response.headers["Retry-After"] = str(inner.retry_after)
        return response

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, error: RequestValidationError):
        failure = InvalidRequest(f"malformed request body: {error}")
        return JSONResponse(status_code=400, content=error_payload(failure))

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "index_docs": len(components.index.doc_ids)}

    @app.get("/api/attributes")
    def attributes() -> dict:
        return {
            "attributes": [
                {"name": attr.name, "phrase": attr.phrase}
                for _, attr in sorted(components.vocabulary.items())
            ],
            "preamble": config.preamble,
            "measures": sorted(m.value for m in DissimilarityMeasure),
        }

    @app.post("/api/prompt")
    def prompt_preview(payload: dict = Body(...)) -> dict:
        query = _attribute_query(payload)
        spec = build_prompt(
            query, components.vocabulary, config.preamble, base_settings(1, None)
        )
        return prompt_to_dict(spec)

    def _spec_from_payload(payload: dict, num_candidates: int, seed) -> PromptSpec:
        settings = base_settings(num_candidates, seed)
        if "prompt" in payload and payload["prompt"] is not None:
            if not isinstance(payload["prompt"], dict):
                raise InvalidRequest("field 'prompt' must be an object")
            return _prompt_override(payload["prompt"], settings)
        if "attribute_query" in payload and payload["attribute_query"] is not None:
            raw_query = payload["attribute_query"]
        elif "positives" in payload or "negatives" in payload:
            raw_query = payload
        else:
            raise InvalidRequest(
                "request needs 'attribute_query' (or top-level positives/negatives) or 'prompt'"
            )
        if not isinstance(raw_query, dict):
            raise InvalidRequest("field 'attribute_query' must be an object")
        query = _attribute_query(raw_query)
        return build_prompt(query, components.vocabulary, config.preamble, settings)

    @app.post("/api/generate")
    def generate_candidates(payload: dict = Body(...)) -> dict:
        if components.provider is None:
            raise InvalidRequest("no generation provider configured")
        num_candidates = _int_field(payload, "num_candidates", 1)
        if num_candidates > MAX_CANDIDATES:
            raise InvalidRequest(f"num_candidates must be <= {MAX_CANDIDATES}")
        spec = _spec_from_payload(payload, num_candidates, payload.get("seed"))
        from .pipeline import generate_with_cache

        try:
            images = generate_with_cache(spec, components.provider, components.cache)
        except AttriqError:
            raise
        except Exception as exc:
            raise RetrievalStepError("generation", exc) from exc
        return {"prompt": prompt_to_dict(spec), "candidates": stash_candidates(images)}

    @app.post("/api/retrieve")
    def retrieve(payload: dict = Body(...)) -> dict:
        measure = _measure(payload)
        k = _int_field(payload, "k", 10)
        num_candidates = _int_field(payload, "num_candidates", 1)
        if num_candidates > MAX_CANDIDATES:
            raise InvalidRequest(f"num_candidates must be <= {MAX_CANDIDATES}")
        aggregation = _aggregation(payload)

        selection = payload.get("candidate_selection")
        if selection is not None:
            if not isinstance(selection, list) or not all(
                isinstance(i, int) and not isinstance(i, bool) for i in selection
            ):
                raise InvalidRequest("candidate_selection must be a list of integers")
            selection = tuple(selection)

        if "query_image_b64" in payload and payload["query_image_b64"] is not None:
            raw = payload["query_image_b64"]
            if not isinstance(raw, str):
                raise InvalidRequest("query_image_b64 must be a base64 string")
            try:
                image_bytes = base64.b64decode(raw, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise InvalidRequest(f"query_image_b64 is not valid base64: {exc}") from exc
            request_obj = RetrievalRequest(
                measure=measure, k=k, query_image=image_bytes
            )
        else:
            spec = _spec_from_payload(payload, num_candidates, payload.get("seed"))
            request_obj = RetrievalRequest(
                measure=measure,
                k=k,
                prompt_override=spec,
                num_candidates=num_candidates,
                aggregation_mode=aggregation,
                candidate_selection=selection,
            )

        result: RetrievalResponse = pipeline.retrieve(request_obj)

        candidate_refs = [
            {
                "prompt_fingerprint": ref.prompt_fingerprint,
                "seed": ref.seed,
                "position": ref.position,
                "provider_id": ref.provider_id,
                "url": "/api/candidate/{}/{}".format(
                    ref.prompt_fingerprint,
                    str(ref.seed) if ref.seed is not None else f"p{ref.position}",
                ),
            }
            for ref in result.generated_candidates
        ]

        results = []
        for rank_position, entry in enumerate(result.ranked.entries, start=1):
            record = components.corpus.get(entry.doc_id)
            results.append(
                {
                    "rank": rank_position,
                    "doc_id": entry.doc_id,
                    "dissimilarity": entry.dissimilarity,
                    "image_uri": result.image_uris[entry.doc_id],
                    "attributes": sorted(record.attributes) if record and record.attributes else [],
                }
            )

        return {
            "measure": measure.value,
            "k": k,
            "results": results,
            "prompt": prompt_to_dict(result.prompt_used) if result.prompt_used else None,
            "candidates": candidate_refs,
            "timings_ms": {
                "generation": result.timings.generation_ms,
                "embedding": result.timings.embedding_ms,
                "scan": result.timings.scan_ms,
            },
        }

    def _sniff_media_type(blob: bytes, fallback: str = "image/png") -> str:
        if blob.startswith(b"\x89PNG\r\n\x1a\n"):
            return "image/png"
        if blob.startswith(b"\xff\xd8\xff"):
            return "image/jpeg"
        return fallback

    @app.get("/api/doc/{doc_id}/image")
    def doc_image(doc_id: str) -> Response:
        record = components.corpus.get(doc_id)
        if record is None:
            raise NotFound(f"unknown doc_id {doc_id!r}")
        path = Path(record.image_uri)
        if not path.is_file():
            raise NotFound(f"image file for doc_id {doc_id!r} is missing")
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=media_type)

    @app.get("/api/candidate/{fingerprint}/{token}")
    def candidate_image(fingerprint: str, token: str) -> Response:
        with candidate_lock:
            blob = candidate_bytes.get((fingerprint, token))
        if blob is None and components.cache is not None and token.lstrip("-").isdigit():
            blob = components.cache.get(fingerprint, int(token))
        if blob is None:
            raise NotFound(f"no cached candidate {fingerprint}/{token}")
        return Response(content=blob, media_type=_sniff_media_type(blob))

    def _run_evaluation(job: EvaluationJob, payload: dict) -> None:
        try:
            with jobs_lock:
                job.status = "running"
            raw_queries = payload.get("queries")
            if not isinstance(raw_queries, list) or not raw_queries:
                raise InvalidRequest("field 'queries' must be a non-empty list")
            queries = [
                _attribute_query(raw, query_id=f"q{i}")
                for i, raw in enumerate(raw_queries)
            ]
            raw_measures = payload.get("measures") or ["l1", "l2", "cosine"]
            try:
                measures = [DissimilarityMeasure.parse(m) for m in raw_measures]
            except ValueError as exc:
                raise InvalidRequest(str(exc)) from exc
            ks = tuple(payload.get("ks") or DEFAULT_PRECISION_KS)
            if not all(isinstance(k, int) and k >= 1 for k in ks):
                raise InvalidRequest("field 'ks' must be positive integers")
            num_candidates = _int_field(payload, "num_candidates", 1)
            aggregation = _aggregation(payload)
            if components.provider is None:
                raise InvalidRequest("no generation provider configured")

            truth = GroundTruth.from_corpus(list(components.corpus.values()))
            backend_id = components.backend.descriptor.backend_id
            query_embeddings = {backend_id: {}}
            for query in queries:
                spec = build_prompt(
                    query,
                    components.vocabulary,
                    config.preamble,
                    base_settings(num_candidates, payload.get("seed")),
                )
                from .pipeline import generate_with_cache

                images = generate_with_cache(spec, components.provider, components.cache)
                query_embeddings[backend_id][query.query_id] = [
                    embed(image.image_bytes, components.backend) for image in images
                ]

            report = score_index_grid(
                indexes={backend_id: components.index},
                query_embeddings=query_embeddings,
                truth=truth,
                queries=queries,
                measures=measures,
                ks=ks,
                aggregation=aggregation,
            )
            with jobs_lock:
                job.report = report_to_dict(report)
                job.status = "done"
        except Exception as exc:
            detail = (
                error_payload(exc)["error"]
                if isinstance(exc, AttriqError)
                else {"code": "INTERNAL_ERROR", "type": type(exc).__name__, "message": str(exc)}
            )
            with jobs_lock:
                job.error = detail
                job.status = "failed"

    @app.post("/api/evaluate", status_code=202)
    def submit_evaluation(payload: dict = Body(...)) -> dict:
        job = EvaluationJob(job_id=uuid.uuid4().hex)
        with jobs_lock:
            jobs[job.job_id] = job
        worker = threading.Thread(
            target=_run_evaluation, args=(job, payload), daemon=True
        )
        worker.start()
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/api/evaluate/{job_id}")
    def evaluation_status(job_id: str) -> dict:
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                raise NotFound(f"unknown evaluation job {job_id!r}")
            body = {"job_id": job.job_id, "status": job.status}
            if job.report is not None:
                body["report"] = job.report
            if job.error is not None:
                body["error"] = job.error
        return body

    if config.server.static_dir and Path(config.server.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount(
            "/", StaticFiles(directory=config.server.static_dir, html=True), name="ui"
        )

    return app


def run_server(config: AppConfig) -> None:
    """Blocking entry point used by `attriq serve`."""
    import uvicorn

    components = build_components(config)
    app = create_app(components)
    uvicorn.run(app, host=config.server.host, port=config.server.port, log_level="info")
