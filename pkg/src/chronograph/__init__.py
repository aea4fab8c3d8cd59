"""Narrative RAG over a two-layer chronological graph.

Offline, a document is chunked, clustered, summarized, and mined for
relation sentences that become chronologically indexed Layer-1 nodes above
the Layer-0 chunks.  Online, queries retrieve Layer-1 anchors, assemble
their ordinal neighborhoods, pull linked chunks, and compose a
token-budgeted context for the reader model.  Everything runs offline
against the deterministic mock provider.
"""

from .builder import BuildResult, build_document, load_build, save_build
from .config import GatewaySet, RunConfig
from .errors import (
    ChronographError,
    ConfigurationError,
    DatasetError,
    GraphBuildError,
    GraphFormatError,
    ProviderError,
    StaleIndexError,
    SummarizationError,
    TemplateError,
)
from .evaluation import (
    QARecord,
    ScoreReport,
    cosine_metric,
    ingest_dataset,
    is_time_question,
    llm_judge,
    rouge_l,
    run_eval,
)
from .extraction import (
    EntityRecord,
    ExtractionResult,
    RelationRecord,
    extract_cluster,
    parse_extraction,
    relation_node_text,
    serialize_extraction,
)
from .gateway import ChatRequest, Gateway, MockProvider, ProviderConfig
from .graph import ChronoGraph, LayerOneNode, LayerZeroNode, build_graph, load_graph, save_graph
from .prompts import render_prompt
from .retrieval import (
    AssembledContext,
    AssembledPassage,
    RetrievalConfig,
    RetrievalEngine,
    RetrievalTrace,
    generate_answer,
)
from .segmentation import (
    ChunkCluster,
    DocumentChunk,
    SentenceSpan,
    chunk_sentences,
    cluster_chunks,
    segment_sentences,
)
from .summarize import ClusterSummary, summarize_cluster, summarize_document
from .tokenizers import count_tokens
from .vectors import EmbeddingRecord, ScoredHit, VectorIndex, index_nodes, load_index, save_index

__version__ = "0.1.0"
