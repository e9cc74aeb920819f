"""Exception taxonomy for the retrieval engine.

Every error carries a stable machine-readable ``code`` so that CLI output and
HTTP responses can map failures one-to-one without string matching.
"""

from __future__ import annotations


class AttriqError(Exception):
    """Base class for all engine errors."""

    code = "INTERNAL_ERROR"


# --- query generation ---------------------------------------------------


class UnknownAttribute(AttriqError):
    code = "UNKNOWN_ATTRIBUTE"

    def __init__(self, name: str):
        super().__init__(f"attribute {name!r} is not in the active vocabulary")
        self.name = name


class InvalidQuery(AttriqError):
    code = "INVALID_QUERY"


class InvalidVocabulary(AttriqError):
    code = "INVALID_VOCABULARY"


class InvalidSettings(AttriqError):
    code = "INVALID_SETTINGS"


class AuthFailure(AttriqError):
    code = "AUTH_FAILURE"


class RateLimited(AttriqError):
    code = "RATE_LIMITED"

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ProviderTimeout(AttriqError):
    code = "PROVIDER_TIMEOUT"


class MalformedResponse(AttriqError):
    code = "MALFORMED_RESPONSE"


# --- embedding ----------------------------------------------------------


class UndecodableImage(AttriqError):
    code = "UNDECODABLE_IMAGE"


class BackendLoadFailure(AttriqError):
    code = "BACKEND_LOAD_FAILURE"


class InferenceFailure(AttriqError):
    code = "INFERENCE_FAILURE"


# --- similarity / ranking -----------------------------------------------


class DimensionMismatch(AttriqError):
    code = "DIMENSION_MISMATCH"


class ZeroVector(AttriqError):
    code = "ZERO_VECTOR"


class BackendMismatch(AttriqError):
    code = "BACKEND_MISMATCH"

    def __init__(self, field: str, expected: object, actual: object):
        super().__init__(
            f"incompatible {field}: index has {expected!r}, query has {actual!r}"
        )
        self.field = field
        self.expected = expected
        self.actual = actual


class KTooLarge(AttriqError):
    code = "K_TOO_LARGE"


class EmptyQuerySet(AttriqError):
    code = "EMPTY_QUERY_SET"


# --- index --------------------------------------------------------------


class EmptyCorpus(AttriqError):
    code = "EMPTY_CORPUS"


class AllDocumentsFailed(AttriqError):
    code = "ALL_DOCUMENTS_FAILED"


class DuplicateDocId(AttriqError):
    code = "DUPLICATE_DOC_ID"

    def __init__(self, doc_id: str):
        super().__init__(f"duplicate doc_id {doc_id!r} in corpus")
        self.doc_id = doc_id


class IoFailure(AttriqError):
    code = "IO_FAILURE"


class CorruptIndex(AttriqError):
    code = "CORRUPT_INDEX"


class VersionUnsupported(AttriqError):
    code = "VERSION_UNSUPPORTED"


# --- evaluation ---------------------------------------------------------


class UnlabeledDocument(AttriqError):
    code = "UNLABELED_DOCUMENT"

    def __init__(self, doc_id: str):
        super().__init__(f"doc_id {doc_id!r} has no ground-truth labels")
        self.doc_id = doc_id


class NoRelevantDocuments(AttriqError):
    code = "NO_RELEVANT_DOCUMENTS"


class RankedListTooShort(AttriqError):
    code = "RANKED_LIST_TOO_SHORT"


class EmptyInput(AttriqError):
    code = "EMPTY_INPUT"


# --- pipeline / service -------------------------------------------------


class ConfigError(AttriqError):
    code = "CONFIG_ERROR"


class InvalidRequest(AttriqError):
    code = "INVALID_REQUEST"


class NotFound(AttriqError):
    code = "NOT_FOUND"


class RetrievalStepError(AttriqError):
    """Wraps a component failure with the pipeline step it occurred in."""

    code = "STEP_FAILURE"

    def __init__(self, step: str, cause: Exception):
        super().__init__(f"step {step!r} failed: {cause}")
        self.step = step
        self.cause = cause
