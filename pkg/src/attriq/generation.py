"""Query image generation: deterministic mock renderer and HTTP provider.

The mock renderer exists so the whole pipeline, including end-to-end tests,
runs without a paid text-to-image account: it produces a seeded value-noise
texture whose lattice is hashed from (prompt fingerprint, seed), so different
prompts yield statistically distinct but perfectly reproducible images.

The HTTP provider speaks a JSON protocol shaped like commercial generation
APIs; endpoint path and auth header come from provider settings so it can be
pointed at compatible services without code changes.
"""

from __future__ import annotations

import base64
import hashlib
import io
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Protocol

import httpx
import numpy as np
from PIL import Image

from ._rng import mix64, mix64_array
from .errors import AuthFailure, MalformedResponse, ProviderTimeout, RateLimited
from .prompts import PromptSpec

_LATTICE_CELLS = 8
_MAX_RETRIES = 3


@dataclass(frozen=True)
class GeneratedImage:
    """One candidate query image plus the provenance needed to cache it."""

    image_bytes: bytes
    provider_id: str
    prompt_fingerprint: str
    created_at: str
    seed: int | None = None

    def decode_size(self) -> tuple[int, int]:
        with Image.open(io.BytesIO(self.image_bytes)) as img:
            return img.size


class GenerationProvider(Protocol):
    provider_id: str

    def generate(self, spec: PromptSpec) -> list[GeneratedImage]:
        """Return settings.num_images decodable images for the prompt."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _noise_texture(key: int, width: int, height: int) -> np.ndarray:
    """Value-noise RGB texture: hashed lattice, bilinearly interpolated."""
    cells = _LATTICE_CELLS
    gy, gx, gc = np.meshgrid(
        np.arange(cells + 1, dtype=np.uint64),
        np.arange(cells + 1, dtype=np.uint64),
        np.arange(3, dtype=np.uint64),
        indexing="ij",
    )
    with np.errstate(over="ignore"):
        coords = (
            np.uint64(key)
            ^ (gy * np.uint64(0x9E3779B97F4A7C15))
            ^ (gx * np.uint64(0xC2B2AE3D27D4EB4F))
            ^ (gc * np.uint64(0x165667B19E3779F9))
        )
    lattice = (mix64_array(coords) >> np.uint64(56)).astype(np.float64)

    # sample positions of pixel centers in lattice space
    ys = (np.arange(height) + 0.5) / height * cells
    xs = (np.arange(width) + 0.5) / width * cells
    y0 = np.clip(np.floor(ys).astype(int), 0, cells - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, cells - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    tl = lattice[y0][:, x0]
    tr = lattice[y0][:, x0 + 1]
    bl = lattice[y0 + 1][:, x0]
    br = lattice[y0 + 1][:, x0 + 1]
    top = tl * (1.0 - fx) + tr * fx
    bottom = bl * (1.0 - fx) + br * fx
    values = top * (1.0 - fy) + bottom * fy
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def mock_render(spec: PromptSpec, seed: int) -> GeneratedImage:
    """Render one deterministic synthetic image for (spec fingerprint, seed)."""
    fingerprint = spec.fingerprint()
    digest = hashlib.sha256(f"{fingerprint}:{seed}".encode("utf-8")).digest()
    key = mix64(int.from_bytes(digest[:8], "big"))
    pixels = _noise_texture(key, spec.settings.width, spec.settings.height)
    buffer = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buffer, format="PNG")
    return GeneratedImage(
        image_bytes=buffer.getvalue(),
        provider_id="mock",
        prompt_fingerprint=fingerprint,
        created_at=_now(),
        seed=seed,
    )


class MockProvider:
    """Deterministic in-process provider backed by :func:`mock_render`.

    Candidate i is rendered with seed (settings.seed or default_seed) + i.
    """

    provider_id = "mock"

    def __init__(self, default_seed: int = 0):
        self.default_seed = default_seed

    def generate(self, spec: PromptSpec) -> list[GeneratedImage]:
        base = spec.settings.seed if spec.settings.seed is not None else self.default_seed
        return [
            mock_render(spec, seed=base + i)
            for i in range(spec.settings.num_images)
        ]


@dataclass(frozen=True)
class HttpProviderSettings:
    base_url: str
    api_key_env: str = "ATTRIQ_API_KEY"
    generate_path: str = "/generations"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    timeout_s: float = 60.0
    backoff_base_s: float = 0.5


class HttpProvider:
    """HTTPS+JSON generation client with bounded retry on throttling.

    Request body: {prompt, negative_prompt?, model, width, height,
    num_images, enhancement, style, contrast, mode}; the response must carry
    an "images" array of {"base64": ...} or {"url": ...} entries.
    """

    provider_id = "http"

    def __init__(
        self,
        settings: HttpProviderSettings,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.settings = settings
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=settings.base_url,
            timeout=settings.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _api_key(self) -> str:
        key = os.environ.get(self.settings.api_key_env, "")
        if not key:
            raise AuthFailure(
                f"environment variable {self.settings.api_key_env} is not set"
            )
        return key

    def _request_body(self, spec: PromptSpec) -> dict:
        s = spec.settings
        body = {
            "prompt": spec.positive_text,
            "model": s.model_name,
            "width": s.width,
            "height": s.height,
            "num_images": s.num_images,
            "enhancement": s.prompt_enhancement,
            "style": s.style,
            "contrast": s.contrast,
            "mode": s.quality_mode,
        }
        if spec.negative_text is not None:
            body["negative_prompt"] = spec.negative_text
        if s.seed is not None:
            body["seed"] = s.seed
        return body

    def _post_once(self, spec: PromptSpec) -> httpx.Response:
        scheme = self.settings.auth_scheme
        headers = {
            self.settings.auth_header: f"{scheme} {self._api_key()}" if scheme else self._api_key()
        }
        try:
            response = self._client.post(
                self.settings.generate_path,
                json=self._request_body(spec),
                headers=headers,
            )
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(f"provider timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise MalformedResponse(f"transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthFailure(f"provider rejected credentials ({response.status_code})")
        if response.status_code == 429:
            retry_after = response.headers.get("Retry-After")
            hint = float(retry_after) if retry_after else None
            raise RateLimited("provider throttled the request", retry_after=hint)
        if response.status_code >= 500:
            raise ProviderTimeout(f"provider unavailable ({response.status_code})")
        if response.status_code != 200:
            raise MalformedResponse(
                f"unexpected provider status {response.status_code}"
            )
        return response

    def _decode_images(self, response: httpx.Response, spec: PromptSpec) -> list[bytes]:
        try:
            payload = response.json()
        except ValueError as exc:
            raise MalformedResponse(f"provider returned non-JSON body: {exc}") from exc
        entries = payload.get("images")
        if not isinstance(entries, list):
            raise MalformedResponse("provider response lacks an images array")
        blobs = []
        for entry in entries:
            if "base64" in entry:
                try:
                    blobs.append(base64.b64decode(entry["base64"], validate=True))
                except Exception as exc:
                    raise MalformedResponse(f"bad base64 payload: {exc}") from exc
            elif "url" in entry:
                blobs.append(self._fetch_url(entry["url"]))
            else:
                raise MalformedResponse(f"image entry without base64 or url: {entry!r}")
        if len(blobs) < spec.settings.num_images:
            raise MalformedResponse(
                f"provider returned {len(blobs)} images, expected {spec.settings.num_images}"
            )
        return blobs

    def _fetch_url(self, url: str) -> bytes:
        try:
            response = self._client.get(url)
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(f"image download timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise MalformedResponse(f"image download failed: {exc}") from exc
        if response.status_code != 200:
            raise MalformedResponse(f"image download status {response.status_code}")
        return response.content

    def generate(self, spec: PromptSpec) -> list[GeneratedImage]:
        attempt = 0
        while True:
            try:
                response = self._post_once(spec)
                break
            except (RateLimited, ProviderTimeout) as exc:
                if attempt >= _MAX_RETRIES:
                    raise
                delay = self.settings.backoff_base_s * (2**attempt)
                if isinstance(exc, RateLimited) and exc.retry_after is not None:
                    delay = max(delay, exc.retry_after)
                self._sleep(delay)
                attempt += 1
        fingerprint = spec.fingerprint()
        created = _now()
        base_seed = spec.settings.seed
        return [
            GeneratedImage(
                image_bytes=blob,
                provider_id=self.provider_id,
                prompt_fingerprint=fingerprint,
                created_at=created,
                seed=(base_seed + i) if base_seed is not None else None,
            )
            for i, blob in enumerate(self._decode_images(response, spec))
        ]


def generate(spec: PromptSpec, provider: GenerationProvider) -> list[GeneratedImage]:
    """Obtain settings.num_images candidate images from the provider."""
    images = provider.generate(spec)
    if len(images) < spec.settings.num_images:
        raise MalformedResponse(
            f"provider produced {len(images)} images, expected {spec.settings.num_images}"
        )
    return images
