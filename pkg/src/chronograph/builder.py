"""Offline per-document build: chunk, cluster, summarize, extract, graph, index.

Each document gets its own directory under the graph dir holding the graph
file, the vector sidecar, and a build log with per-stage LLM call counts.
Builds are resumable through the gateway cache: rerunning over unchanged
input performs zero provider calls.
"""

from __future__ import annotations

import datetime
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import GatewaySet, RunConfig
from .extraction import ExtractionResult, extract_cluster
from .graph import ChronoGraph, build_graph, load_graph, save_graph
from .prompts import template_hashes
from .segmentation import chunk_sentences, cluster_chunks, segment_sentences
from .summarize import ClusterSummary, summarize_document
from .vectors import VectorIndex, index_nodes, load_index, save_index

logger = logging.getLogger(__name__)

GRAPH_FILE = "graph.jsonl"
INDEX_FILE = "vectors.jsonl"
LOG_FILE = "build_log.jsonl"


@dataclass
class BuildResult:
    document_id: str
    graph: ChronoGraph
    index: VectorIndex
    stats: dict


def _raw_cluster_summaries(clusters, chunks) -> list[ClusterSummary]:
    """Stand-ins for the no-summarization build mode: the extraction input
    is the cluster's raw chunk text."""
    by_index = {c.chunk_index: c for c in chunks}
    return [
        ClusterSummary(
            cluster_index=cluster.cluster_index,
            summary_text="\n".join(by_index[i].text for i in cluster.chunk_indices),
            source_chunk_indices=list(cluster.chunk_indices),
            model_tag="raw-chunks",
        )
        for cluster in clusters
    ]


def _extract_all(summaries, gateway, max_output_tokens, workers) -> list[ExtractionResult]:
    results: list[ExtractionResult | None] = [None] * len(summaries)

    def run(i: int) -> None:
        results[i] = extract_cluster(summaries[i], gateway, max_output_tokens)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(run, range(len(summaries))))
    return [r for r in results if r is not None]


def build_document(document_id: str, text: str, cfg: RunConfig,
                   gateways: GatewaySet) -> BuildResult:
    """Run the offline pipeline for one document.

    Stage call counts in the result are deltas against the given gateways'
    counters, so each concurrent document build should use its own
    GatewaySet (they can share one cache directory).
    """
    before = {
        "summarize_calls": gateways.summarizer.stats.chat_calls,
        "extract_calls": gateways.extractor.stats.chat_calls,
        "embed_calls": gateways.embedder.stats.embed_calls,
        "embed_texts": gateways.embedder.stats.embed_texts,
    }

    sentences = segment_sentences(text)
    chunks = chunk_sentences(sentences, cfg.chunk_tokens)
    clusters = cluster_chunks(chunks, cfg.cluster_size)

    if cfg.mode == "naive_chunks":
        summaries: list[ClusterSummary] = []
        extractions: list[ExtractionResult] = []
    elif cfg.mode == "no_summary_graph":
        summaries = _raw_cluster_summaries(clusters, chunks)
        extractions = _extract_all(
            summaries, gateways.extractor, cfg.extraction_max_tokens, cfg.workers
        )
    else:
        summaries = summarize_document(
            chunks, cfg.cluster_size, gateways.summarizer, cfg.summary_max_tokens
        )
        extractions = _extract_all(
            summaries, gateways.extractor, cfg.extraction_max_tokens, cfg.workers
        )

    metadata = {
        "document_id": document_id,
        "chunk_tokens": cfg.chunk_tokens,
        "cluster_size": cfg.cluster_size,
        "mode": cfg.mode,
        "key_value": cfg.key_value,
        "models": {stage: cfg.providers[stage].model_name for stage in cfg.providers},
        "prompt_hashes": template_hashes(),
        "built_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "run_config": cfg.to_dict(),
    }
    graph = build_graph(chunks, summaries, extractions, metadata)

    include_chunks = cfg.embed_chunks or cfg.mode == "naive_chunks"
    index = index_nodes(
        graph,
        gateways.embedder,
        include_chunks=include_chunks,
        key_mode=cfg.key_value,
        link_window=cfg.link_window,
    )

    stats = {
        "document_id": document_id,
        "sentences": len(sentences),
        "chunks": len(chunks),
        "clusters": len(clusters),
        "relations": len(graph.layer1),
        "summarize_calls": gateways.summarizer.stats.chat_calls - before["summarize_calls"],
        "extract_calls": gateways.extractor.stats.chat_calls - before["extract_calls"],
        "embed_calls": gateways.embedder.stats.embed_calls - before["embed_calls"],
        "embed_texts": gateways.embedder.stats.embed_texts - before["embed_texts"],
    }
    stats["llm_calls"] = stats["summarize_calls"] + stats["extract_calls"]
    logger.info(
        "built %s: %d chunks, %d clusters, %d relations, %d LLM calls",
        document_id, stats["chunks"], stats["clusters"], stats["relations"],
        stats["llm_calls"],
    )
    return BuildResult(document_id=document_id, graph=graph, index=index, stats=stats)


def document_dir(graph_dir: str | Path, document_id: str) -> Path:
    return Path(graph_dir) / document_id


def save_build(result: BuildResult, graph_dir: str | Path) -> Path:
    out = document_dir(graph_dir, result.document_id)
    out.mkdir(parents=True, exist_ok=True)
    save_graph(result.graph, out / GRAPH_FILE)
    save_index(result.index, out / INDEX_FILE)
    with open(out / LOG_FILE, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"event": "build_complete", **result.stats}) + "\n")
        fh.write(json.dumps({
            "event": "config",
            "run_config": result.graph.metadata.get("run_config", {}),
        }) + "\n")
    return out


def load_build(graph_dir: str | Path, document_id: str) -> tuple[ChronoGraph, VectorIndex]:
    """Load a saved graph + index pair; FileNotFoundError when absent."""
    out = document_dir(graph_dir, document_id)
    graph = load_graph(out / GRAPH_FILE)
    index = load_index(out / INDEX_FILE)
    index.ensure_matches(graph)
    return graph, index
