"""Service configuration: file format, validation, and component assembly."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .agents import (
    ChatBackend,
    CompletionParams,
    HttpChatBackend,
    PromptAssets,
    ScriptedChatBackend,
)
from .embedding import DEFAULT_DIMENSION, EmbeddingProvider, HashedNgramEmbedder, HttpEmbeddingProvider
from .session import (
    GateConfig,
    HttpSpeechToText,
    HttpTextToSpeech,
    MockSpeechToText,
    MockTextToSpeech,
    SpeechToText,
    TextToSpeech,
)
from .triggers import ConfigError
from .vindex import RetrievalConfig

ENV_BACKEND_URL = "OCEANARIUM_BACKEND_URL"
ENV_LISTEN = "OCEANARIUM_LISTEN"


@dataclass
class EmbeddingSettings:
    provider: str = "mock"  # mock | http
    dimension: int = DEFAULT_DIMENSION
    seed: int = 0
    ngram: int = 3
    base_url: str | None = None

    def build(self) -> EmbeddingProvider:
        if self.provider == "mock":
            return HashedNgramEmbedder(dimension=self.dimension, seed=self.seed, ngram=self.ngram)
        if self.provider == "http":
            if not self.base_url:
                raise ConfigError("embedding.base_url required for the http provider")
            return HttpEmbeddingProvider(self.base_url, dimension=self.dimension)
        raise ConfigError(f"unknown embedding provider {self.provider!r}")

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "dimension": self.dimension,
            "seed": self.seed,
            "ngram": self.ngram,
            "base_url": self.base_url,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddingSettings":
        return cls(
            provider=data.get("provider", "mock"),
            dimension=int(data.get("dimension", DEFAULT_DIMENSION)),
            seed=int(data.get("seed", 0)),
            ngram=int(data.get("ngram", 3)),
            base_url=data.get("base_url"),
        )


@dataclass
class BackendSettings:
    mode: str = "mock"  # mock | http
    base_url: str | None = None
    model: str = ""
    script_path: str | None = None  # None -> packaged default script
    max_retries: int = 2
    latency_s: float = 0.0

    def build(self) -> ChatBackend:
        if self.mode == "mock":
            if self.script_path:
                backend = ScriptedChatBackend.from_file(self.script_path)
            else:
                with resources.as_file(
                    resources.files("oceanarium.assets").joinpath("mock_script.yaml")
                ) as path:
                    backend = ScriptedChatBackend.from_file(path)
            if self.latency_s:
                backend.latency_s = self.latency_s
            return backend
        if self.mode == "http":
            if not self.base_url:
                raise ConfigError("backend.base_url required for the http backend")
            return HttpChatBackend(self.base_url, model=self.model, max_retries=self.max_retries)
        raise ConfigError(f"unknown backend mode {self.mode!r}")


@dataclass
class AdapterSettings:
    stt_mode: str = "mock"
    stt_url: str | None = None
    tts_mode: str = "mock"
    tts_url: str | None = None
    seconds_per_word: float = 0.4
    tts_latency_s: float = 0.0

    def build_stt(self) -> SpeechToText:
        if self.stt_mode == "mock":
            return MockSpeechToText()
        if self.stt_mode == "http":
            if not self.stt_url:
                raise ConfigError("stt.url required for the http adapter")
            return HttpSpeechToText(self.stt_url)
        raise ConfigError(f"unknown stt mode {self.stt_mode!r}")

    def build_tts(self) -> TextToSpeech:
        if self.tts_mode == "mock":
            return MockTextToSpeech(seconds_per_word=self.seconds_per_word, latency_s=self.tts_latency_s)
        if self.tts_mode == "http":
            if not self.tts_url:
                raise ConfigError("tts.url required for the http adapter")
            return HttpTextToSpeech(self.tts_url)
        raise ConfigError(f"unknown tts mode {self.tts_mode!r}")


@dataclass
class StageParams:
    decider: CompletionParams = field(default_factory=lambda: CompletionParams(max_tokens=160))
    rewriter: CompletionParams = field(default_factory=lambda: CompletionParams(max_tokens=200))
    responder: CompletionParams = field(
        default_factory=lambda: CompletionParams(max_tokens=512, temperature=0.7)
    )


@dataclass
class ServerConfig:
    listen: str = "127.0.0.1:8080"
    index_path: str = "data/corpus.idx"
    catalog_path: str | None = None  # None -> packaged default
    trigger_rules_path: str | None = None
    prompts_path: str | None = None
    persist_dir: str = "data/transcripts"
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    backend: BackendSettings = field(default_factory=BackendSettings)
    adapters: AdapterSettings = field(default_factory=AdapterSettings)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    stage_params: StageParams = field(default_factory=StageParams)
    history_cap: int = 6
    sensor_listen: str | None = None

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


def _default_asset(name: str) -> Path:
    with resources.as_file(resources.files("oceanarium.assets").joinpath(name)) as path:
        return Path(path)


def resolve_catalog_path(config: ServerConfig) -> Path:
    return Path(config.catalog_path) if config.catalog_path else _default_asset("catalog.yaml")


def resolve_rules_path(config: ServerConfig) -> Path:
    return (
        Path(config.trigger_rules_path)
        if config.trigger_rules_path
        else _default_asset("trigger_rules.yaml")
    )


def load_server_config(path: str | Path) -> ServerConfig:
    """Read and validate a service config file, applying environment overrides."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a YAML mapping")

    base = Path(path).parent

    def _resolve(value: str | None) -> str | None:
        if value is None:
            return None
        p = Path(value)
        return str(p if p.is_absolute() else base / p)

    retrieval_raw = data.get("retrieval", {})
    gate_raw = data.get("gate", {})
    try:
        config = ServerConfig(
            listen=data.get("listen", "127.0.0.1:8080"),
            index_path=_resolve(data.get("index_path", "data/corpus.idx")),
            catalog_path=_resolve(data.get("catalog_path")),
            trigger_rules_path=_resolve(data.get("trigger_rules_path")),
            prompts_path=_resolve(data.get("prompts_path")),
            persist_dir=_resolve(data.get("persist_dir", "data/transcripts")),
            embedding=EmbeddingSettings.from_dict(data.get("embedding", {})),
            backend=BackendSettings(
                mode=data.get("backend", {}).get("mode", "mock"),
                base_url=data.get("backend", {}).get("base_url"),
                model=data.get("backend", {}).get("model", ""),
                script_path=_resolve(data.get("backend", {}).get("script_path")),
                max_retries=int(data.get("backend", {}).get("max_retries", 2)),
                latency_s=float(data.get("backend", {}).get("latency_s", 0.0)),
            ),
            adapters=AdapterSettings(
                stt_mode=data.get("stt", {}).get("mode", "mock"),
                stt_url=data.get("stt", {}).get("url"),
                tts_mode=data.get("tts", {}).get("mode", "mock"),
                tts_url=data.get("tts", {}).get("url"),
                seconds_per_word=float(data.get("tts", {}).get("seconds_per_word", 0.4)),
                tts_latency_s=float(data.get("tts", {}).get("latency_s", 0.0)),
            ),
            retrieval=RetrievalConfig(
                k=int(retrieval_raw.get("k", 2)),
                ann_enabled=bool(retrieval_raw.get("ann_enabled", True)),
                dimension=int(retrieval_raw.get("dimension", data.get("embedding", {}).get("dimension", DEFAULT_DIMENSION))),
            ),
            gate=GateConfig(
                engage_cm=float(gate_raw.get("engage_cm", 50.0)),
                release_cm=float(gate_raw.get("release_cm", 60.0)),
                release_hold_s=float(gate_raw.get("release_hold_s", 0.5)),
                watchdog_s=float(gate_raw.get("watchdog_s", 5.0)),
            ),
            history_cap=int(data.get("history_cap", 6)),
            sensor_listen=data.get("sensor_listen"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    if url := os.environ.get(ENV_BACKEND_URL):
        config.backend.base_url = url
        config.backend.mode = "http"
    if listen := os.environ.get(ENV_LISTEN):
        config.listen = listen
    validate_server_config(config)
    return config


def validate_server_config(config: ServerConfig) -> None:
    """Fail fast, before serving, on anything unreadable or inconsistent."""
    problems: list[str] = []
    if not Path(config.index_path).is_file():
        problems.append(f"index file not readable: {config.index_path}")
    for label, p in (
        ("catalog", config.catalog_path),
        ("trigger rules", config.trigger_rules_path),
        ("prompts", config.prompts_path),
        ("mock script", config.backend.script_path),
    ):
        if p is not None and not Path(p).is_file():
            problems.append(f"{label} file not readable: {p}")
    try:
        config.port
    except (ValueError, IndexError):
        problems.append(f"listen address must be host:port, got {config.listen!r}")
    if config.history_cap < 1:
        problems.append("history_cap must be >= 1")
    if problems:
        raise ConfigError("invalid server config:\n  " + "\n  ".join(problems))
