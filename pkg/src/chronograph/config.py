"""Resolved run configuration: pipeline parameters plus one provider per stage.

Defaults are the reference settings (chunk limit 100, cluster size 10,
top_k 15, max 20 passages, 1,500-token context).  Precedence is CLI flags
over config file over defaults; the fully resolved config is serialized
into graph metadata, build logs, traces, and reports for provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .gateway import Gateway, ProviderConfig
from .retrieval import RetrievalConfig

STAGES = ("summarizer", "extractor", "embedder", "reader", "judge")


def default_providers() -> dict[str, ProviderConfig]:
    return {stage: ProviderConfig() for stage in STAGES}


@dataclass
class RunConfig:
    # Graph construction
    chunk_tokens: int = 100
    cluster_size: int = 10
    summary_max_tokens: int = 2000
    extraction_max_tokens: int = 2000
    # Retrieval
    top_k: int = 15
    max_passages: int = 20
    context_token_limit: int = 1500
    link_window: int = 1
    mode: str = "full"
    key_value: str = "separated"
    answer_max_tokens: int = 64
    # Evaluation
    judge_max_tokens: int = 8
    judge_template: str = "narrative"
    use_judge: bool = True
    use_cosine: bool = True
    time_filter_case_sensitive: bool = False
    # Infrastructure
    embed_chunks: bool = False
    cache_dir: str | None = None
    workers: int = 2
    providers: dict[str, ProviderConfig] = field(default_factory=default_providers)

    def __post_init__(self):
        for stage in STAGES:
            self.providers.setdefault(stage, ProviderConfig())

    def retrieval(self) -> RetrievalConfig:
        return RetrievalConfig(
            top_k=self.top_k,
            max_passages=self.max_passages,
            context_token_limit=self.context_token_limit,
            link_window=self.link_window,
            mode=self.mode,
            key_value=self.key_value,
            answer_max_tokens=self.answer_max_tokens,
        )

    def gateways(self) -> "GatewaySet":
        return GatewaySet(**{
            stage: Gateway(self.providers[stage], stage=stage, cache_dir=self.cache_dir)
            for stage in STAGES
        })

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "providers":
                out["providers"] = {s: p.to_dict() for s, p in self.providers.items()}
            else:
                out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        providers = {}
        for stage, pdata in (kwargs.pop("providers", None) or {}).items():
            if stage not in STAGES:
                raise ConfigurationError(f"unknown provider stage {stage!r}")
            pknown = {f.name for f in fields(ProviderConfig)}
            punknown = set(pdata) - pknown
            if punknown:
                raise ConfigurationError(
                    f"unknown provider keys for {stage}: {sorted(punknown)}"
                )
            providers[stage] = ProviderConfig(**pdata)
        return cls(providers=providers, **kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)


@dataclass
class GatewaySet:
    summarizer: Gateway
    extractor: Gateway
    embedder: Gateway
    reader: Gateway
    judge: Gateway
