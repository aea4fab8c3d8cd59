"""The two-layer chronological graph and its line-delimited JSON persistence.

Layer 0 holds document chunks in source order; Layer 1 holds relation
description sentences indexed lexicographically by (cluster, emission
order), which is the global chronological order.  Each Layer-1 node has
directed down-edges to every chunk of the cluster it came from, and
adjacency between consecutive Layer-1 nodes is implicit in the stored
order.  The on-disk format is documented in docs/graph-format.md.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

from .errors import GraphBuildError, GraphFormatError
from .extraction import ExtractionResult, RelationRecord, relation_node_text
from .segmentation import DocumentChunk
from .summarize import ClusterSummary

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class LayerZeroNode:
    node_id: int
    text: str
    cluster_index: int
    token_count: int


@dataclass
class LayerOneNode:
    node_id: int
    cluster_index: int
    emission_rank: int
    text: str
    source: RelationRecord


@dataclass
class ChronoGraph:
    layer0: list[LayerZeroNode]
    layer1: list[LayerOneNode]
    down_edges: dict[int, list[int]]
    metadata: dict

    _layer1_pos: dict[int, int] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )
    _layer0_pos: dict[int, int] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        self._layer1_pos = {n.node_id: i for i, n in enumerate(self.layer1)}
        self._layer0_pos = {n.node_id: i for i, n in enumerate(self.layer0)}

    def layer1_node(self, node_id: int) -> LayerOneNode:
        try:
            return self.layer1[self._layer1_pos[node_id]]
        except KeyError:
            raise KeyError(f"unknown layer-1 node {node_id}") from None

    def layer0_node(self, node_id: int) -> LayerZeroNode:
        try:
            return self.layer0[self._layer0_pos[node_id]]
        except KeyError:
            raise KeyError(f"unknown layer-0 node {node_id}") from None

    def neighbors(self, node_id: int, window: int = 1) -> list[int]:
        """Up to ``window`` ordinal predecessors and successors of a Layer-1
        node, ascending.  Ordinal position in the stored sequence, not
        node_id arithmetic — gaps in ids are skipped over naturally."""
        pos = self._layer1_pos.get(node_id)
        if pos is None:
            raise KeyError(f"unknown layer-1 node {node_id}")
        lo = max(0, pos - window)
        hi = min(len(self.layer1), pos + window + 1)
        return [self.layer1[i].node_id for i in range(lo, hi) if i != pos]

    def chunks_of(self, node_id: int) -> list[LayerZeroNode]:
        """Layer-0 nodes linked below a Layer-1 node, in ascending chunk order."""
        if node_id not in self._layer1_pos:
            raise KeyError(f"unknown layer-1 node {node_id}")
        return [self.layer0_node(cid) for cid in sorted(self.down_edges.get(node_id, []))]

    def _record_lines(self) -> list[str]:
        lines = []
        for n in self.layer0:
            lines.append(_dump({
                "kind": "chunk",
                "node_id": n.node_id,
                "cluster_index": n.cluster_index,
                "token_count": n.token_count,
                "text": n.text,
            }))
        for n in self.layer1:
            lines.append(_dump({
                "kind": "relation",
                "node_id": n.node_id,
                "cluster_index": n.cluster_index,
                "emission_rank": n.emission_rank,
                "text": n.text,
                "source": {
                    "source_entity": n.source.source_entity,
                    "target_entity": n.source.target_entity,
                    "description": n.source.description,
                    "strength": n.source.strength,
                },
            }))
        for n in self.layer1:
            lines.append(_dump({
                "kind": "edges",
                "node_id": n.node_id,
                "chunks": sorted(self.down_edges.get(n.node_id, [])),
            }))
        return lines

    def content_hash(self) -> str:
        """sha256 over the node/edge records (header metadata excluded), so
        the hash keys on graph content and the vector sidecar pairing
        survives a byte-identical rebuild."""
        body = "\n".join(self._record_lines())
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def build_graph(
    chunks: list[DocumentChunk],
    summaries: list[ClusterSummary],
    extractions: list[ExtractionResult],
    metadata: dict | None = None,
) -> ChronoGraph:
    """Materialize the two-layer graph from the offline pipeline's outputs.

    Every cluster with a summary must have an extraction result (which may
    hold zero relations).  Layer-1 node ids are assigned globally in
    (cluster_index, emission order) sequence.
    """
    by_cluster = {e.cluster_index: e for e in extractions}
    summary_clusters = sorted(s.cluster_index for s in summaries)
    missing = [c for c in summary_clusters if c not in by_cluster]
    if missing:
        raise GraphBuildError(
            f"no extraction result for cluster(s) {missing}"
        )

    layer0 = []
    for chunk in chunks:
        if chunk.cluster_index < 0:
            raise GraphBuildError(
                f"chunk {chunk.chunk_index} has no cluster assignment"
            )
        layer0.append(
            LayerZeroNode(
                node_id=chunk.chunk_index,
                text=chunk.text,
                cluster_index=chunk.cluster_index,
                token_count=chunk.token_count,
            )
        )

    chunks_by_cluster: dict[int, list[int]] = {}
    for node in layer0:
        chunks_by_cluster.setdefault(node.cluster_index, []).append(node.node_id)

    layer1 = []
    down_edges: dict[int, list[int]] = {}
    next_id = 0
    for cluster_index in summary_clusters:
        extraction = by_cluster[cluster_index]
        if not extraction.relations:
            logger.warning("cluster %d contributes no layer-1 nodes", cluster_index)
        for rank, record in enumerate(extraction.relations):
            node = LayerOneNode(
                node_id=next_id,
                cluster_index=cluster_index,
                emission_rank=rank,
                text=relation_node_text(record),
                source=record,
            )
            layer1.append(node)
            down_edges[node.node_id] = sorted(chunks_by_cluster.get(cluster_index, []))
            next_id += 1

    return ChronoGraph(
        layer0=layer0,
        layer1=layer1,
        down_edges=down_edges,
        metadata=dict(metadata or {}),
    )


def save_graph(graph: ChronoGraph, path) -> None:
    """Write the graph as versioned line-delimited JSON (UTF-8)."""
    body_lines = graph._record_lines()
    header = _dump({
        "kind": "header",
        "version": FORMAT_VERSION,
        "layer0_count": len(graph.layer0),
        "layer1_count": len(graph.layer1),
        "record_count": len(body_lines),
        "content_hash": graph.content_hash(),
        "metadata": graph.metadata,
    })
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for line in body_lines:
            fh.write(line + "\n")


def load_graph(path) -> ChronoGraph:
    """Reload a saved graph; structural inverse of save_graph.

    Raises GraphFormatError citing the first offending line on version
    mismatch, truncation, malformed records, or checksum failure.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise GraphFormatError(f"{path}: empty graph file (line 1)")

    def parse(line_no: int) -> dict:
        try:
            obj = json.loads(lines[line_no - 1])
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{path}: malformed record (line {line_no}): {exc}")
        if not isinstance(obj, dict) or "kind" not in obj:
            raise GraphFormatError(f"{path}: record without kind (line {line_no})")
        return obj

    header = parse(1)
    if header["kind"] != "header":
        raise GraphFormatError(f"{path}: first record is not a header (line 1)")
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise GraphFormatError(
            f"{path}: unsupported graph format version {version!r} (line 1)"
        )
    expected = header.get("record_count", 0)
    if len(lines) - 1 != expected:
        first_bad = min(len(lines) + 1, expected + 2)
        raise GraphFormatError(
            f"{path}: expected {expected} records, found {len(lines) - 1} "
            f"(line {first_bad})"
        )

    layer0, layer1 = [], []
    down_edges: dict[int, list[int]] = {}
    for line_no in range(2, len(lines) + 1):
        obj = parse(line_no)
        kind = obj["kind"]
        try:
            if kind == "chunk":
                layer0.append(LayerZeroNode(
                    node_id=obj["node_id"],
                    text=obj["text"],
                    cluster_index=obj["cluster_index"],
                    token_count=obj["token_count"],
                ))
            elif kind == "relation":
                src = obj["source"]
                layer1.append(LayerOneNode(
                    node_id=obj["node_id"],
                    cluster_index=obj["cluster_index"],
                    emission_rank=obj["emission_rank"],
                    text=obj["text"],
                    source=RelationRecord(
                        source_entity=src["source_entity"],
                        target_entity=src["target_entity"],
                        description=src["description"],
                        strength=src["strength"],
                    ),
                ))
            elif kind == "edges":
                down_edges[obj["node_id"]] = list(obj["chunks"])
            else:
                raise GraphFormatError(
                    f"{path}: unknown record kind {kind!r} (line {line_no})"
                )
        except KeyError as exc:
            raise GraphFormatError(
                f"{path}: record missing field {exc} (line {line_no})"
            )

    graph = ChronoGraph(
        layer0=layer0,
        layer1=layer1,
        down_edges=down_edges,
        metadata=header.get("metadata", {}),
    )
    stored = header.get("content_hash")
    if stored != graph.content_hash():
        raise GraphFormatError(f"{path}: checksum failure (line 1)")
    return graph
