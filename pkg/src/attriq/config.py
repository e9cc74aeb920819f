"""YAML configuration loading.

A config file wires together the pieces a deployment needs: which generation
provider to talk to, which embedding backend to run, where the corpus
manifest / vocabulary / index live on disk, and server options. Secrets are
never stored here; the provider section names an environment variable that
holds the API key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

DEFAULT_PORT = 8787


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"  # "mock" or "http"
    base_url: str | None = None
    api_key_env: str = "ATTRIQ_API_KEY"
    generate_path: str = "/generations"
    timeout_s: float = 60.0
    default_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ConfigError("http provider requires base_url")


@dataclass(frozen=True)
class ServerConfig:
    port: int = DEFAULT_PORT
    host: str = "127.0.0.1"
    api_token: str | None = None
    static_dir: str | None = None

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ConfigError(f"port {self.port} out of range")


@dataclass(frozen=True)
class AppConfig:
    backend: str = "test"
    vocabulary_path: str | None = None
    manifest_path: str | None = None
    index_path: str | None = None
    cache_dir: str | None = None
    preamble: str = "a full page of a historical document"
    seed: int = 0
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    def api_key(self) -> str | None:
        return os.environ.get(self.provider.api_key_env)


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    return value


def _build(raw: dict, base_dir: Path) -> AppConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    def resolve(value: str | None) -> str | None:
        if value is None:
            return None
        path = Path(value)
        return str(path if path.is_absolute() else base_dir / path)

    provider_raw = _section(raw, "provider")
    server_raw = _section(raw, "server")
    cache_raw = _section(raw, "cache")

    known_provider = {k for k in ProviderConfig.__dataclass_fields__}
    known_server = {k for k in ServerConfig.__dataclass_fields__}
    for name, section, known in (
        ("provider", provider_raw, known_provider),
        ("server", server_raw, known_server),
    ):
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"unknown {name} option(s): {sorted(unknown)}")

    top_known = {
        "backend",
        "vocabulary",
        "manifest",
        "index",
        "preamble",
        "seed",
        "provider",
        "server",
        "cache",
    }
    unknown = set(raw) - top_known
    if unknown:
        raise ConfigError(f"unknown config option(s): {sorted(unknown)}")

    try:
        provider = ProviderConfig(**provider_raw)
        server = ServerConfig(
            **{
                **server_raw,
                "static_dir": resolve(server_raw.get("static_dir")),
            }
        )
        return AppConfig(
            backend=str(raw.get("backend", "test")),
            vocabulary_path=resolve(raw.get("vocabulary")),
            manifest_path=resolve(raw.get("manifest")),
            index_path=resolve(raw.get("index")),
            cache_dir=resolve(cache_raw.get("dir")),
            preamble=str(raw.get("preamble", AppConfig.preamble)),
            seed=int(raw.get("seed", 0)),
            provider=provider,
            server=server,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> AppConfig:
    """Parse a YAML config file. Relative paths inside the file are resolved
    against the file's own directory, so a config travels with its data."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return _build(raw, path.parent.resolve())


def default_config() -> AppConfig:
    return AppConfig()
