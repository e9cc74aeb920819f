"""Attribute vocabulary and attribute-based queries.

An attribute pairs a short machine name ("has_wax_seal") with the prompt
fragment used when composing generation prompts ("has a wax seal"). Queries
combine present (positive) and absent (negative) attributes; the same sets
later define relevance during evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidQuery, InvalidVocabulary, UnknownAttribute


@dataclass(frozen=True)
class Attribute:
    name: str
    phrase: str

    def __post_init__(self):
        if not self.name:
            raise InvalidVocabulary("attribute name must be non-empty")
        if any(ch.isspace() for ch in self.name):
            raise InvalidVocabulary(
                f"attribute name {self.name!r} must not contain whitespace"
            )
        if not self.phrase:
            raise InvalidVocabulary(f"attribute {self.name!r} has an empty phrase")


@dataclass(frozen=True)
class AttributeQuery:
    query_id: str
    positives: frozenset[str] = field(default_factory=frozenset)
    negatives: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(self.positives))
        object.__setattr__(self, "negatives", frozenset(self.negatives))
        if not self.query_id:
            raise InvalidQuery("query_id must be non-empty")
        overlap = self.positives & self.negatives
        if overlap:
            raise InvalidQuery(
                f"attributes cannot be both positive and negative: {sorted(overlap)}"
            )
        if not self.positives and not self.negatives:
            raise InvalidQuery("query must name at least one attribute")

    def validate_against(self, vocabulary: dict[str, Attribute]) -> None:
        """Raise UnknownAttribute if any name does not resolve."""
        for name in sorted(self.positives | self.negatives):
            if name not in vocabulary:
                raise UnknownAttribute(name)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "positives": sorted(self.positives),
            "negatives": sorted(self.negatives),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> AttributeQuery:
        try:
            return cls(
                query_id=raw["query_id"],
                positives=frozenset(raw.get("positives", ())),
                negatives=frozenset(raw.get("negatives", ())),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidQuery(f"malformed query record: {exc}") from exc


def load_vocabulary(path: str | Path) -> dict[str, Attribute]:
    """Load a JSON array of {name, phrase} records into a name-keyed map."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidVocabulary(f"cannot read vocabulary {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise InvalidVocabulary("vocabulary file must be a JSON array")
    vocabulary: dict[str, Attribute] = {}
    for entry in raw:
        if not isinstance(entry, dict) or "name" not in entry or "phrase" not in entry:
            raise InvalidVocabulary(f"malformed vocabulary entry: {entry!r}")
        attribute = Attribute(name=entry["name"], phrase=entry["phrase"])
        if attribute.name in vocabulary:
            raise InvalidVocabulary(f"duplicate attribute name {attribute.name!r}")
        vocabulary[attribute.name] = attribute
    return vocabulary


def load_queries(path: str | Path) -> list[AttributeQuery]:
    """Load a JSONL file with one query record per line."""
    queries = []
    seen_ids = set()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InvalidQuery(f"cannot read query file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidQuery(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        query = AttributeQuery.from_dict(raw)
        if query.query_id in seen_ids:
            raise InvalidQuery(f"duplicate query_id {query.query_id!r}")
        seen_ids.add(query.query_id)
        queries.append(query)
    return queries
