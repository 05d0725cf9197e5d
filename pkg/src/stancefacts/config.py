"""Configuration loading and runtime wiring for the CLI and the HTTP service."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .datastore import DatasetStore
from .embeddings import CachingProvider, FieldCatalog, HashEmbeddingProvider, RemoteEmbeddingProvider
from .gateway import (
    HttpChatProvider,
    LlmGateway,
    RecordingChatProvider,
    ReplayChatProvider,
    Transcript,
)
from .tree import RetrievalConfig, Retriever


@dataclass
class AppConfig:
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    embedding_provider: str = "hash"  # hash | remote
    embedding_dim: int = 256
    embedding_seed: int = 1337
    embedding_base_url: str = ""
    embedding_model: str = "all-MiniLM-L6-v2"
    embedding_api_key_env: str = "STANCEFACTS_EMBED_API_KEY"
    embedding_cache_dir: str = ""
    llm_base_url: str = ""
    llm_model: str = "gpt-4o"
    llm_temperature: float = 0.2
    llm_api_key_env: str = "STANCEFACTS_LLM_API_KEY"
    port: int = 8040

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        retrieval = RetrievalConfig(**payload.pop("retrieval", {}))
        return cls(retrieval=retrieval, **payload)


@dataclass
class Runtime:
    store: DatasetStore
    catalog: FieldCatalog
    gateway: LlmGateway
    retriever: Retriever
    transcript: Transcript | None = None


def build_embedding_provider(config: AppConfig):
    if config.embedding_provider == "remote":
        inner = RemoteEmbeddingProvider(
            base_url=config.embedding_base_url,
            model=config.embedding_model,
            api_key=os.environ.get(config.embedding_api_key_env, ""),
            cache_dir=config.embedding_cache_dir or None,
        )
    else:
        inner = HashEmbeddingProvider(dim=config.embedding_dim, seed=config.embedding_seed)
    return CachingProvider(inner)


def build_chat_provider(config: AppConfig, mode: str, transcript: Transcript | None):
    if mode == "replay":
        if transcript is None:
            raise ValueError("replay mode needs a transcript")
        return ReplayChatProvider(transcript)
    live = HttpChatProvider(
        base_url=config.llm_base_url,
        model=config.llm_model,
        api_key=os.environ.get(config.llm_api_key_env, ""),
        temperature=config.llm_temperature,
    )
    if mode == "record":
        if transcript is None:
            raise ValueError("record mode needs a transcript")
        return RecordingChatProvider(live, transcript)
    return live


def build_runtime(
    config: AppConfig | None = None,
    store_dir: str | Path | None = None,
    transcript_path: str | Path | None = None,
    mode: str = "live",
    chat_provider=None,
) -> Runtime:
    """Wire a full runtime; ``chat_provider`` overrides mode-based construction."""
    config = config or AppConfig()
    store = DatasetStore.load(store_dir) if store_dir else DatasetStore()
    provider = build_embedding_provider(config)
    catalog = FieldCatalog(provider)
    catalog.sync_store(store)
    transcript = Transcript(transcript_path) if transcript_path else None
    if chat_provider is None:
        chat_provider = build_chat_provider(config, mode, transcript)
    gateway = LlmGateway(
        chat_provider,
        repair_budget=config.retrieval.llm_repair_budget,
        max_facts=config.retrieval.facts_per_subtable,
    )
    retriever = Retriever(store, catalog, gateway, config.retrieval)
    return Runtime(
        store=store, catalog=catalog, gateway=gateway, retriever=retriever, transcript=transcript
    )
