"""Flat exact vector index over graph node texts.

All vectors are unit-normalized at ingestion so cosine similarity is a dot
product.  Queries are exact scans (corpora are single books; exactness buys
testability).  The index persists as a line-delimited sidecar keyed by the
graph's content hash: a JSON header, then one record per node with the
vector as base64 little-endian float64 bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GraphFormatError, ProviderError, StaleIndexError
from .gateway import Gateway
from .graph import ChronoGraph

FORMAT_VERSION = 1

LAYER_ZERO = "zero"
LAYER_ONE = "one"


@dataclass
class EmbeddingRecord:
    node_id: int
    layer: str
    vector: np.ndarray
    dim: int
    model_tag: str


@dataclass
class ScoredHit:
    node_id: int
    score: float


@dataclass
class VectorIndex:
    records: list[EmbeddingRecord]
    model_tag: str
    graph_hash: str
    key_mode: str = "separated"
    link_window: int = 1

    _by_layer: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        self._by_layer = {}
        for layer in (LAYER_ZERO, LAYER_ONE):
            recs = [r for r in self.records if r.layer == layer]
            if recs:
                self._by_layer[layer] = (
                    np.array([r.node_id for r in recs], dtype=np.int64),
                    np.vstack([r.vector for r in recs]),
                )

    @property
    def dim(self) -> int:
        return self.records[0].dim if self.records else 0

    def has_layer(self, layer: str) -> bool:
        return layer in self._by_layer

    def vector_for(self, node_id: int, layer: str = LAYER_ONE) -> np.ndarray:
        ids, matrix = self._by_layer[layer]
        pos = np.nonzero(ids == node_id)[0]
        if len(pos) == 0:
            raise KeyError(f"no embedding for layer-{layer} node {node_id}")
        return matrix[pos[0]]

    def top_k(self, query_vector: np.ndarray, k: int, layer: str = LAYER_ONE) -> list[ScoredHit]:
        """Exact top-k by descending dot product, ties broken by ascending
        node_id.  Returns min(k, layer size) hits."""
        if k < 1:
            raise ConfigurationError(f"top_k must be >= 1, got {k}")
        if layer not in self._by_layer:
            return []
        ids, matrix = self._by_layer[layer]
        query = np.asarray(query_vector, dtype=np.float64)
        if query.shape != (matrix.shape[1],):
            raise ConfigurationError(
                f"query dimension {query.shape} does not match index dim {matrix.shape[1]}"
            )
        scores = matrix @ query
        order = np.lexsort((ids, -scores))
        return [
            ScoredHit(node_id=int(ids[i]), score=float(scores[i]))
            for i in order[:k]
        ]

    def ensure_matches(self, graph: ChronoGraph) -> None:
        actual = graph.content_hash()
        if actual != self.graph_hash:
            raise StaleIndexError(
                f"index was built for graph {self.graph_hash[:12]}..., "
                f"loaded graph is {actual[:12]}..."
            )


def merged_unit_text(graph: ChronoGraph, node_id: int, window: int) -> str:
    """The merged-key text for a node: itself plus its ordinal neighbors,
    joined in chronological order."""
    members = sorted([node_id, *graph.neighbors(node_id, window)])
    return ", ".join(graph.layer1_node(m).text for m in members)


def index_nodes(
    graph: ChronoGraph,
    gateway: Gateway,
    include_chunks: bool = False,
    key_mode: str = "separated",
    link_window: int = 1,
) -> VectorIndex:
    """Embed every Layer-1 node text (Layer-0 chunks only when asked) and
    return the index, keyed to the graph's content hash.

    ``key_mode="merged"`` embeds each node's merged neighborhood text as a
    single unit instead of the bare relation sentence.
    """
    if key_mode not in ("separated", "merged"):
        raise ConfigurationError(f"unknown key_mode {key_mode!r}")
    records: list[EmbeddingRecord] = []
    model_tag = gateway.config.model_name

    if graph.layer1:
        if key_mode == "merged":
            texts = [merged_unit_text(graph, n.node_id, link_window) for n in graph.layer1]
        else:
            texts = [n.text for n in graph.layer1]
        matrix = gateway.embed(texts)
        for node, vector in zip(graph.layer1, matrix):
            records.append(EmbeddingRecord(node.node_id, LAYER_ONE, vector, len(vector), model_tag))

    if include_chunks and graph.layer0:
        matrix = gateway.embed([n.text for n in graph.layer0])
        for node, vector in zip(graph.layer0, matrix):
            records.append(EmbeddingRecord(node.node_id, LAYER_ZERO, vector, len(vector), model_tag))

    dims = {r.dim for r in records}
    if len(dims) > 1:
        raise ProviderError(f"inconsistent embedding dimensions in index: {sorted(dims)}")

    return VectorIndex(
        records=records,
        model_tag=model_tag,
        graph_hash=graph.content_hash(),
        key_mode=key_mode,
        link_window=link_window,
    )


def _encode(vector: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vector, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str, dim: int) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    vector = np.frombuffer(raw, dtype="<f8")
    if len(vector) != dim:
        raise ValueError(f"vector has {len(vector)} components, header says {dim}")
    return vector.astype(np.float64)


def save_index(index: VectorIndex, path) -> None:
    body_lines = [
        json.dumps(
            {"node_id": r.node_id, "layer": r.layer, "vector": _encode(r.vector)},
            separators=(",", ":"),
        )
        for r in index.records
    ]
    checksum = hashlib.sha256("\n".join(body_lines).encode("utf-8")).hexdigest()
    header = json.dumps(
        {
            "kind": "header",
            "version": FORMAT_VERSION,
            "dim": index.dim,
            "model_tag": index.model_tag,
            "graph_hash": index.graph_hash,
            "key_mode": index.key_mode,
            "link_window": index.link_window,
            "count": len(body_lines),
            "checksum": checksum,
        },
        separators=(",", ":"),
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for line in body_lines:
            fh.write(line + "\n")


def load_index(path) -> VectorIndex:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise GraphFormatError(f"{path}: empty index file (line 1)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: malformed header (line 1): {exc}")
    if header.get("version") != FORMAT_VERSION:
        raise GraphFormatError(
            f"{path}: unsupported index format version {header.get('version')!r} (line 1)"
        )
    expected = header.get("count", 0)
    if len(lines) - 1 != expected:
        first_bad = min(len(lines) + 1, expected + 2)
        raise GraphFormatError(
            f"{path}: expected {expected} records, found {len(lines) - 1} (line {first_bad})"
        )
    checksum = hashlib.sha256("\n".join(lines[1:]).encode("utf-8")).hexdigest()
    if checksum != header.get("checksum"):
        raise GraphFormatError(f"{path}: checksum failure (line 1)")

    records = []
    dim = header.get("dim", 0)
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            vector = _decode(obj["vector"], dim)
            records.append(
                EmbeddingRecord(obj["node_id"], obj["layer"], vector, dim, header["model_tag"])
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise GraphFormatError(f"{path}: malformed record (line {line_no}): {exc}")
    return VectorIndex(
        records=records,
        model_tag=header["model_tag"],
        graph_hash=header["graph_hash"],
        key_mode=header.get("key_mode", "separated"),
        link_window=header.get("link_window", 1),
    )
