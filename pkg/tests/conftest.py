"""Shared fixtures: controlled providers, synthetic graphs, random documents."""

from __future__ import annotations

import random

import numpy as np
import pytest

from chronograph.extraction import ExtractionResult, RelationRecord
from chronograph.gateway import Gateway, ProviderConfig
from chronograph.graph import build_graph
from chronograph.segmentation import chunk_sentences, cluster_chunks, segment_sentences
from chronograph.summarize import ClusterSummary

DIM = 16


class StaticVectorProvider:
    """Embeds each known text to a prescribed vector; test-controlled."""

    def __init__(self, mapping: dict[str, list[float]]):
        self.mapping = dict(mapping)

    def embed(self, texts, config):
        try:
            return [list(self.mapping[t]) for t in texts]
        except KeyError as exc:
            raise AssertionError(f"no prescribed vector for {exc}")

    def chat(self, request, config):  # pragma: no cover - not used
        raise AssertionError("StaticVectorProvider has no chat")


class ScriptedChatProvider:
    """Chat responses computed by a test-supplied function of the request."""

    def __init__(self, fn):
        self.fn = fn

    def chat(self, request, config):
        return self.fn(request)

    def embed(self, texts, config):  # pragma: no cover - not used
        raise AssertionError("ScriptedChatProvider has no embed")


def make_gateway(provider=None, stage="test", cache_dir=None, **overrides) -> Gateway:
    config = ProviderConfig(**overrides)
    return Gateway(config, stage=stage, cache_dir=cache_dir, provider=provider)


def basis_vector(axis: int, dim: int = DIM) -> list[float]:
    vec = [0.0] * dim
    vec[axis] = 1.0
    return vec


def tilted_vector(score: float, axis: int, dim: int = DIM) -> list[float]:
    """Unit vector whose dot product with basis_vector(0) is exactly ``score``."""
    vec = [0.0] * dim
    vec[0] = score
    vec[axis] = float(np.sqrt(1.0 - score * score))
    return vec


def relation_text(i: int) -> str:
    words = ("alpha", "bravo", "cedar", "dawn", "ember", "fjord",
             "grove", "haven", "isle", "jade")
    return f"event {words[i % len(words)]} number {i} unfolds"


def make_fixture_graph(relation_counts=(4, 3, 2), chunks_per_cluster=10,
                       chunk_sentence_tokens=8, text_fn=relation_text):
    """Graph with one sentence per chunk, ``chunks_per_cluster * len(counts)``
    chunks of ~``chunk_sentence_tokens`` tokens, and the given relation
    counts per cluster (descriptions from ``text_fn``)."""
    n_chunks = chunks_per_cluster * len(relation_counts)
    pad = max(0, chunk_sentence_tokens - 4)
    sentences_text = " ".join(
        f"Chunk {i} " + ("pad " * pad) + "ends." for i in range(n_chunks)
    )
    spans = segment_sentences(sentences_text)
    assert len(spans) == n_chunks
    max_tokens = max(s.token_count for s in spans)
    chunks = chunk_sentences(spans, max_tokens + 1)
    assert len(chunks) == n_chunks
    clusters = cluster_chunks(chunks, chunks_per_cluster)

    summaries = [
        ClusterSummary(c.cluster_index, f"summary {c.cluster_index}",
                       list(c.chunk_indices), "mock-model")
        for c in clusters
    ]
    extractions = []
    node = 0
    for cluster, count in zip(clusters, relation_counts):
        relations = []
        for _ in range(count):
            relations.append(RelationRecord(
                source_entity=f"SRC{node}",
                target_entity=f"TGT{node}",
                description=text_fn(node),
                strength=float(1 + node % 9),
            ))
            node += 1
        extractions.append(ExtractionResult(
            cluster_index=cluster.cluster_index, relations=relations
        ))
    graph = build_graph(chunks, summaries, extractions, metadata={"fixture": True})
    return graph


@pytest.fixture
def fixture_graph():
    return make_fixture_graph()


_LEXICON = (
    "the quick river bends north past old stone mills while harvest "
    "wagons creak toward market carrying grain wool cider and news of "
    "distant wars that nobody in the valley quite believes"
).split()
_NAMES = ("Alric", "Brenna", "Caldus", "Doria", "Edwin", "Fenna",
          "Garrick", "Hilda", "Ivo", "Jessa", "Korin", "Lysa")
_PLACES = ("Ashford", "Brookmere", "Caldwell", "Dunmore", "Eastvale")
_ABBREVS = ("Mr.", "Mrs.", "Dr.", "St.", "Prof.")


def random_sentence(rng: random.Random) -> str:
    words = [rng.choice(_LEXICON) for _ in range(rng.randint(3, 13))]
    if rng.random() < 0.5:
        words.insert(rng.randrange(len(words) + 1), rng.choice(_NAMES))
    if rng.random() < 0.25:
        words.insert(0, rng.choice(_ABBREVS) + " " + rng.choice(_NAMES))
    if rng.random() < 0.2:
        words.append("near " + rng.choice(_PLACES))
    sentence = " ".join(words)
    sentence = sentence[0].upper() + sentence[1:]
    terminator = rng.choice("..!?")
    if rng.random() < 0.15:
        sentence = '"' + sentence + terminator + '"'
    else:
        sentence += terminator
    return sentence


def random_document(rng: random.Random, n_sentences: int) -> str:
    parts = []
    for i in range(n_sentences):
        parts.append(random_sentence(rng))
        if i < n_sentences - 1:
            parts.append(rng.choice((" ", " ", " ", "  ", "\n", "\n\n")))
    return "".join(parts)


def synthetic_novella(seed: int = 2024, target_tokens: int = 10_000) -> str:
    """A deterministic multi-character story, roughly ``target_tokens`` long."""
    rng = random.Random(seed)
    parts = []
    tokens = 0
    i = 0
    while tokens < target_tokens:
        a, b = rng.sample(_NAMES, 2)
        place = rng.choice(_PLACES)
        verbs = ("rode to", "argued with", "rescued", "betrayed",
                 "wrote to", "followed", "warned", "forgave")
        sentence = f"{a} {rng.choice(verbs)} {b} near {place} on the {i}th day."
        filler = random_sentence(rng)
        parts.append(sentence + " " + filler + (" " if i % 7 else "\n\n"))
        tokens += len(sentence.split()) + len(filler.split()) + 4
        i += 1
    return "".join(parts)
