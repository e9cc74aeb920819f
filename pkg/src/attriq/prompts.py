"""Prompt assembly for the text-to-image generation step.

A prompt is a preamble describing the document type plus the phrases of the
requested positive attributes joined with " and "; phrases of the negative
attributes become the generator's negative prompt. Joining order is sorted by
attribute name so that identical queries always produce byte-identical
prompts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import InvalidSettings, InvalidQuery
from .vocab import Attribute, AttributeQuery

DEFAULT_MODEL = "Phoenix 1.0"
DEFAULT_STYLE = "dynamic"
DEFAULT_CONTRAST = "medium"
DEFAULT_QUALITY_MODE = "quality"
SMALL_SQUARE = (512, 512)
SMALL_PORTRAIT = (512, 768)


@dataclass(frozen=True)
class GenerationSettings:
    """Generator knobs, defaulting to the engine's standard profile:

    Phoenix 1.0 model, prompt enhancement off, dynamic style, medium
    contrast, quality mode, small 1:1 output.
    """

    model_name: str = DEFAULT_MODEL
    prompt_enhancement: bool = False
    style: str = DEFAULT_STYLE
    contrast: str = DEFAULT_CONTRAST
    quality_mode: str = DEFAULT_QUALITY_MODE
    width: int = SMALL_SQUARE[0]
    height: int = SMALL_SQUARE[1]
    num_images: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidSettings("width and height must be positive")
        # 1:1 exactly, or 2:3 portrait within integer rounding
        square = self.width == self.height
        portrait = abs(3 * self.width - 2 * self.height) <= 2
        if not (square or portrait):
            raise InvalidSettings(
                f"{self.width}x{self.height} is neither 1:1 nor 2:3"
            )
        if self.num_images < 1:
            raise InvalidSettings("num_images must be >= 1")

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "prompt_enhancement": self.prompt_enhancement,
            "style": self.style,
            "contrast": self.contrast,
            "quality_mode": self.quality_mode,
            "width": self.width,
            "height": self.height,
            "num_images": self.num_images,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> GenerationSettings:
        return cls(**{k: raw[k] for k in cls.__dataclass_fields__ if k in raw})


@dataclass(frozen=True)
class PromptSpec:
    positive_text: str
    negative_text: str | None = None
    settings: GenerationSettings = field(default_factory=GenerationSettings)

    def __post_init__(self):
        if not self.positive_text:
            raise InvalidQuery("positive_text must be non-empty")
        if self.negative_text is not None and not self.negative_text:
            raise InvalidQuery("negative_text must be non-empty when present")

    def to_dict(self) -> dict:
        return {
            "positive_text": self.positive_text,
            "negative_text": self.negative_text,
            "settings": self.settings.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> PromptSpec:
        settings = raw.get("settings")
        return cls(
            positive_text=raw["positive_text"],
            negative_text=raw.get("negative_text"),
            settings=GenerationSettings.from_dict(settings) if settings else GenerationSettings(),
        )

    def canonical_bytes(self) -> bytes:
        """Canonical serialization: sorted keys, compact separators."""
        return json.dumps(
            self.to_dict(), sort_keys=True, separators=(",", ":")
        ).encode("utf-8")

    def fingerprint(self) -> str:
        """Content hash, stable under re-serialization of an equal spec."""
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def build_prompt(
    query: AttributeQuery,
    vocabulary: dict[str, Attribute],
    preamble: str,
    settings: GenerationSettings | None = None,
) -> PromptSpec:
    """Compose the generation prompt for an attribute query.

    Positive phrases are appended to the preamble, all joined with " and " in
    sorted attribute-name order; negative phrases are joined with ", " into
    the negative prompt (absent when the query has no negatives).
    """
    if not preamble:
        raise InvalidQuery("preamble must be non-empty")
    query.validate_against(vocabulary)

    positive_phrases = [vocabulary[name].phrase for name in sorted(query.positives)]
    negative_phrases = [vocabulary[name].phrase for name in sorted(query.negatives)]

    positive_text = " and ".join([preamble, *positive_phrases])
    negative_text = ", ".join(negative_phrases) if negative_phrases else None
    return PromptSpec(
        positive_text=positive_text,
        negative_text=negative_text,
        settings=settings if settings is not None else GenerationSettings(),
    )
