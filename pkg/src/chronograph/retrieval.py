"""Online retrieval: hierarchical search, neighborhood assembly, context
composition, and answer generation.

The query is embedded and matched against Layer-1 relation sentences; each
hit ("anchor") is expanded with its ordinal neighbors so the passage reads
in story order, the anchors' linked Layer-0 chunks join the candidate pool,
and candidates are admitted by descending relevance under a token budget
and a passage cap.  Chronology rules inside a passage, relevance rules
across passages.  Ablations and the merged-key variant are config switches.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .gateway import ChatRequest, Gateway
from .graph import ChronoGraph
from .tokenizers import count_tokens
from .vectors import LAYER_ONE, LAYER_ZERO, VectorIndex, merged_unit_text

logger = logging.getLogger(__name__)

MODES = ("full", "no_assemble", "no_summary_graph", "naive_chunks")
KEY_MODES = ("separated", "merged")


@dataclass
class RetrievalConfig:
    top_k: int = 15
    max_passages: int = 20
    context_token_limit: int = 1500
    link_window: int = 1
    mode: str = "full"
    key_value: str = "separated"
    answer_max_tokens: int = 64

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown retrieval mode {self.mode!r}")
        if self.key_value not in KEY_MODES:
            raise ConfigurationError(f"unknown key_value {self.key_value!r}")
        if self.top_k < 1 or self.max_passages < 1 or self.context_token_limit < 1:
            raise ConfigurationError("top_k, max_passages and context_token_limit must be >= 1")
        if self.link_window < 0:
            raise ConfigurationError("link_window must be >= 0")

    def to_dict(self) -> dict:
        return {
            "top_k": self.top_k,
            "max_passages": self.max_passages,
            "context_token_limit": self.context_token_limit,
            "link_window": self.link_window,
            "mode": self.mode,
            "key_value": self.key_value,
            "answer_max_tokens": self.answer_max_tokens,
        }


@dataclass
class AssembledPassage:
    """One candidate context passage: an assembled Layer-1 neighborhood or a
    linked Layer-0 chunk.  Member texts are joined in ascending node order,
    so each passage reads chronologically whatever its relevance."""

    anchor_node_id: int
    member_node_ids: list[int]
    text: str
    relevance: float
    kind: str = "relation"  # relation | chunk
    chunk_node_id: int | None = None
    admitted: bool = False
    skip_reason: str | None = None

    def token_count(self) -> int:
        return count_tokens(self.text)


@dataclass
class AssembledContext:
    passages: list[AssembledPassage]
    text: str
    total_tokens: int


@dataclass
class RetrievalTrace:
    query: str
    mode: str
    key_value: str
    anchors: list[dict] = field(default_factory=list)
    candidates: list[AssembledPassage] = field(default_factory=list)
    admitted_count: int = 0
    total_tokens: int = 0
    anchor_mean_similarity: float | None = None
    neighbor_mean_similarity: float | None = None
    warnings: list[str] = field(default_factory=list)
    run_config: dict = field(default_factory=dict)

    def to_json_lines(self) -> list[str]:
        lines = [json.dumps({
            "kind": "trace_header",
            "query": self.query,
            "mode": self.mode,
            "key_value": self.key_value,
            "admitted_count": self.admitted_count,
            "total_tokens": self.total_tokens,
            "anchor_mean_similarity": self.anchor_mean_similarity,
            "neighbor_mean_similarity": self.neighbor_mean_similarity,
            "warnings": self.warnings,
            "run_config": self.run_config,
        }, ensure_ascii=False)]
        for anchor in self.anchors:
            lines.append(json.dumps({"kind": "anchor", **anchor}, ensure_ascii=False))
        for cand in self.candidates:
            lines.append(json.dumps({
                "kind": "passage",
                "passage_kind": cand.kind,
                "anchor_node_id": cand.anchor_node_id,
                "member_node_ids": cand.member_node_ids,
                "chunk_node_id": cand.chunk_node_id,
                "relevance": cand.relevance,
                "tokens": cand.token_count(),
                "admitted": cand.admitted,
                "skip_reason": cand.skip_reason,
            }, ensure_ascii=False))
        return lines

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.to_json_lines():
                fh.write(line + "\n")


def _candidate_sort_key(p: AssembledPassage):
    kind_rank = 0 if p.kind == "relation" else 1
    tiebreak = p.chunk_node_id if p.chunk_node_id is not None else (
        p.member_node_ids[0] if p.member_node_ids else p.anchor_node_id
    )
    return (-p.relevance, p.anchor_node_id, kind_rank, tiebreak)


class RetrievalEngine:
    """Read-only query engine over one graph + vector index pair."""

    def __init__(self, graph: ChronoGraph, index: VectorIndex, embed_gateway: Gateway,
                 reader_gateway: Gateway | None = None):
        index.ensure_matches(graph)
        if index.model_tag != embed_gateway.config.model_name:
            logger.warning(
                "query embedder %r differs from index model %r",
                embed_gateway.config.model_name, index.model_tag,
            )
        self.graph = graph
        self.index = index
        self.embed_gateway = embed_gateway
        self.reader_gateway = reader_gateway

    def run(self, query: str, cfg: RetrievalConfig) -> tuple[AssembledContext, RetrievalTrace]:
        """Retrieve once, returning both the context and its trace."""
        return self._run(query, cfg)

    def retrieve(self, query: str, cfg: RetrievalConfig) -> AssembledContext:
        context, _ = self._run(query, cfg)
        return context

    def trace(self, query: str, cfg: RetrievalConfig) -> RetrievalTrace:
        _, trace = self._run(query, cfg)
        return trace

    def answer(self, query: str, cfg: RetrievalConfig) -> str:
        if self.reader_gateway is None:
            raise ConfigurationError("no reader gateway configured")
        context = self.retrieve(query, cfg)
        return generate_answer(context, query, self.reader_gateway, cfg.answer_max_tokens)

    def _check_key_mode(self, cfg: RetrievalConfig) -> None:
        if cfg.mode == "naive_chunks":
            return
        if cfg.key_value == "merged" and self.index.key_mode != "merged":
            raise ConfigurationError(
                "key_value=merged requires an index built with key_mode=merged"
            )
        if cfg.key_value == "separated" and self.index.key_mode == "merged":
            raise ConfigurationError(
                "this index holds merged-unit embeddings; query with key_value=merged"
            )

    def _run(self, query: str, cfg: RetrievalConfig) -> tuple[AssembledContext, RetrievalTrace]:
        cfg.validate()
        self._check_key_mode(cfg)
        trace = RetrievalTrace(query=query, mode=cfg.mode, key_value=cfg.key_value)

        if cfg.mode == "naive_chunks":
            if not self.index.has_layer(LAYER_ZERO):
                raise ConfigurationError(
                    "naive_chunks retrieval needs chunk embeddings; "
                    "build the index with embed_chunks enabled or --mode naive_chunks"
                )
            layer = LAYER_ZERO
        else:
            layer = LAYER_ONE
            if not self.graph.layer1:
                trace.warnings.append("graph has no layer-1 nodes; empty context")
                logger.warning("empty graph for query %r", query)
                return AssembledContext([], "", 0), trace

        query_vector = self.embed_gateway.embed_text(query)
        hits = self.index.top_k(query_vector, cfg.top_k, layer=layer)
        trace.anchors = [
            {"node_id": h.node_id, "score": h.score, "layer": layer} for h in hits
        ]

        if cfg.mode == "naive_chunks":
            candidates = [
                AssembledPassage(
                    anchor_node_id=h.node_id,
                    member_node_ids=[],
                    text=self.graph.layer0_node(h.node_id).text,
                    relevance=h.score,
                    kind="chunk",
                    chunk_node_id=h.node_id,
                )
                for h in hits
            ]
        else:
            candidates = self._assemble(hits, cfg, query_vector, trace)

        context = _admit(candidates, cfg)
        trace.candidates = candidates
        trace.admitted_count = len(context.passages)
        trace.total_tokens = context.total_tokens
        if not context.passages:
            trace.warnings.append("no passages admitted; context is empty")
        return context, trace

    def _assemble(self, hits, cfg: RetrievalConfig, query_vector: np.ndarray,
                  trace: RetrievalTrace) -> list[AssembledPassage]:
        graph = self.graph
        merged = cfg.key_value == "merged"
        window = self.index.link_window if merged else cfg.link_window

        candidates: list[AssembledPassage] = []
        claimed: set[int] = set()
        anchor_ids = {h.node_id for h in hits}
        neighbor_ids: set[int] = set()

        for hit in hits:
            if merged:
                members = sorted({hit.node_id, *graph.neighbors(hit.node_id, window)})
                text = merged_unit_text(graph, hit.node_id, window)
            else:
                expand = cfg.mode == "full"
                raw = {hit.node_id}
                if expand:
                    raw.update(graph.neighbors(hit.node_id, cfg.link_window))
                # Each member belongs to the highest-ranked anchor's passage.
                members = sorted(m for m in raw if m not in claimed)
                if not members:
                    continue
                claimed.update(members)
                text = ", ".join(graph.layer1_node(m).text for m in members)
            neighbor_ids.update(m for m in members if m not in anchor_ids)
            candidates.append(
                AssembledPassage(
                    anchor_node_id=hit.node_id,
                    member_node_ids=members,
                    text=text,
                    relevance=hit.score,
                )
            )

        seen_chunks: set[int] = set()
        for hit in hits:
            for node in graph.chunks_of(hit.node_id):
                if node.node_id in seen_chunks:
                    continue
                seen_chunks.add(node.node_id)
                candidates.append(
                    AssembledPassage(
                        anchor_node_id=hit.node_id,
                        member_node_ids=[],
                        text=node.text,
                        relevance=hit.score,
                        kind="chunk",
                        chunk_node_id=node.node_id,
                    )
                )

        # Per-node query similarity of anchors vs appended neighbors (only
        # meaningful when the index holds per-node vectors).
        if hits and not merged:
            trace.anchor_mean_similarity = float(np.mean([h.score for h in hits]))
            if neighbor_ids:
                sims = [
                    float(query_vector @ self.index.vector_for(nid, LAYER_ONE))
                    for nid in sorted(neighbor_ids)
                ]
                trace.neighbor_mean_similarity = float(np.mean(sims))
        return candidates


def _admit(candidates: list[AssembledPassage], cfg: RetrievalConfig) -> AssembledContext:
    """Greedy budget admission: relevance order, skip-and-continue on
    overflow, hard cap on passage count.  Token totals are always counted
    on the final joined text, never summed."""
    ordered = sorted(candidates, key=_candidate_sort_key)
    admitted: list[AssembledPassage] = []
    text = ""
    total = 0
    for cand in ordered:
        if len(admitted) >= cfg.max_passages:
            cand.skip_reason = "passage_limit"
            continue
        tentative = cand.text if not admitted else text + "\n\n" + cand.text
        tokens = count_tokens(tentative)
        if tokens > cfg.context_token_limit:
            cand.skip_reason = "token_budget"
            continue
        cand.admitted = True
        admitted.append(cand)
        text = tentative
        total = tokens
    return AssembledContext(passages=admitted, text=text, total_tokens=total)


def generate_answer(context: AssembledContext, query: str, reader_gateway: Gateway,
                    max_output_tokens: int = 64) -> str:
    """Feed the assembled context plus the question to the reader model."""
    if context.text:
        user = context.text + "\n\n" + query
    else:
        logger.warning("answering %r with empty context", query)
        user = query
    return reader_gateway.chat(ChatRequest("", user, max_output_tokens))
