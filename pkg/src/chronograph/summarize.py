"""Cluster summarization: concatenate member chunks and call the LLM."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import SummarizationError
from .gateway import ChatRequest, Gateway
from .prompts import render_prompt
from .segmentation import ChunkCluster, DocumentChunk, cluster_chunks
from .tokenizers import count_tokens

logger = logging.getLogger(__name__)


@dataclass
class ClusterSummary:
    cluster_index: int
    summary_text: str
    source_chunk_indices: list[int]
    model_tag: str


def _summarize_text(chunks: list[DocumentChunk], gateway: Gateway, max_output_tokens: int) -> str:
    context = "\n".join(c.text for c in chunks)
    system, user = render_prompt("summarize", {"context": context})
    budget = gateway.config.context_tokens
    if (
        budget is not None
        and len(chunks) >= 2
        and count_tokens(system + "\n" + user) > budget
    ):
        # Cluster does not fit the provider context: summarize halves and
        # concatenate the partial summaries.
        mid = len(chunks) // 2
        logger.warning(
            "cluster context exceeds provider budget (%d tokens); splitting %d chunks",
            budget, len(chunks),
        )
        left = _summarize_text(chunks[:mid], gateway, max_output_tokens)
        right = _summarize_text(chunks[mid:], gateway, max_output_tokens)
        return left + " " + right
    return gateway.chat(ChatRequest(system, user, max_output_tokens))


def summarize_cluster(
    cluster: ChunkCluster,
    chunks: list[DocumentChunk],
    gateway: Gateway,
    max_output_tokens: int = 2000,
) -> ClusterSummary:
    """Summarize one cluster's member chunks, joined in order by newlines."""
    if not cluster.chunk_indices:
        raise SummarizationError(f"cluster {cluster.cluster_index} is empty")
    by_index = {c.chunk_index: c for c in chunks}
    try:
        members = [by_index[i] for i in cluster.chunk_indices]
    except KeyError as exc:
        raise SummarizationError(
            f"cluster {cluster.cluster_index} references unknown chunk {exc}"
        )
    try:
        text = _summarize_text(members, gateway, max_output_tokens)
    except Exception as exc:
        raise SummarizationError(
            f"cluster {cluster.cluster_index}: {exc}"
        ) from exc
    if not text.strip():
        raise SummarizationError(
            f"cluster {cluster.cluster_index} returned an empty summary"
        )
    return ClusterSummary(
        cluster_index=cluster.cluster_index,
        summary_text=text,
        source_chunk_indices=list(cluster.chunk_indices),
        model_tag=gateway.config.model_name,
    )


def summarize_document(
    chunks: list[DocumentChunk],
    l: int,
    gateway: Gateway,
    max_output_tokens: int = 2000,
) -> list[ClusterSummary]:
    """Summarize every cluster of ``l`` chunks; output ordered by cluster.

    Clusters run concurrently under the gateway's parallelism bound.  Every
    cluster is attempted; if any ends without a summary the whole stage
    fails with an error naming the failed clusters.
    """
    clusters = cluster_chunks(chunks, l)
    if not clusters:
        return []
    results: list[ClusterSummary | None] = [None] * len(clusters)
    failures: list[str] = []

    def run(i: int) -> None:
        try:
            results[i] = summarize_cluster(clusters[i], chunks, gateway, max_output_tokens)
        except SummarizationError as exc:
            logger.error("summarization failed: %s", exc)
            failures.append(str(exc))

    workers = max(1, gateway.config.max_parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, range(len(clusters))))

    if failures:
        raise SummarizationError(
            f"{len(failures)} of {len(clusters)} clusters have no summary: "
            + "; ".join(sorted(failures))
        )
    return [s for s in results if s is not None]
