"""Sentence segmentation and fixed-token-budget chunking.

Documents are split into sentences by a frozen rule-based segmenter, packed
greedily into chunks that stay below a token limit without splitting
sentences (unless a single sentence already exceeds the limit), and grouped
into sequential clusters.  Everything here is pure and deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .tokenizers import DEFAULT_TOKENIZER, Tokenizer, count_tokens

logger = logging.getLogger(__name__)

_TERMINATORS = ".!?"
# Closing quotes/brackets that may trail a terminator before the whitespace.
_CLOSERS = "\"'”’)»]"
# Characters that may open the next sentence instead of an uppercase letter.
_OPENERS = "\"'“‘(«["

# Words whose trailing period does not end a sentence. Compared lowercase,
# with internal dots kept ("e.g" is the token left of the final dot of "e.g.").
_ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "rev", "hon", "st", "sr", "jr",
    "gen", "col", "capt", "lt", "sgt", "sen", "rep",
    "vs", "etc", "cf", "al", "e.g", "i.e", "viz",
    "fig", "no", "vol", "ch", "pp", "p", "approx", "dept", "est",
})


@dataclass
class SentenceSpan:
    """One sentence of the source document.

    ``text`` is the verbatim slice ``document[char_start:char_end]``.  A
    span runs from its first non-whitespace character to the start of the
    next sentence, so inter-sentence whitespace is preserved inside the
    preceding span and concatenating spans reproduces the source exactly.
    """

    text: str
    char_start: int
    char_end: int
    token_count: int


@dataclass
class DocumentChunk:
    """An ordered run of whole sentences whose token count is below the limit."""

    chunk_index: int
    sentences: list[SentenceSpan]
    token_count: int
    cluster_index: int = -1

    @property
    def text(self) -> str:
        return "".join(s.text for s in self.sentences)


@dataclass
class ChunkCluster:
    cluster_index: int
    chunk_indices: list[int] = field(default_factory=list)


def _word_before(document: str, index: int) -> str:
    """Non-whitespace run immediately left of ``index`` (exclusive)."""
    start = index
    while start > 0 and not document[start - 1].isspace():
        start -= 1
    return document[start:index]


def _is_abbreviation(document: str, dot_index: int) -> bool:
    word = _word_before(document, dot_index).lstrip("\"'“‘(«[")
    if not word:
        return False
    # Single-letter initials: "J. R. Tolkien".
    if len(word) == 1 and word.isalpha():
        return True
    return word.lower() in _ABBREVIATIONS


def segment_sentences(
    document: str, tokenizer: Tokenizer | None = None
) -> list[SentenceSpan]:
    """Split ``document`` into sentence spans by the frozen rule.

    A sentence boundary is a terminator (. ! ?), optionally followed by
    closing quotes/brackets, then at least one whitespace character, where
    the next non-whitespace character is an uppercase letter or an opening
    quote/bracket.  A period does not terminate when the word before it is
    a known abbreviation or a single-letter initial.  Text without terminal
    punctuation is a single sentence.
    """
    tok = tokenizer if tokenizer is not None else DEFAULT_TOKENIZER

    first = 0
    while first < len(document) and document[first].isspace():
        first += 1
    if first == len(document):
        return []
    last = len(document)
    while document[last - 1].isspace():
        last -= 1

    starts = [first]
    i = first
    while i < last:
        ch = document[i]
        if ch not in _TERMINATORS:
            i += 1
            continue
        j = i + 1
        while j < last and document[j] in _CLOSERS:
            j += 1
        k = j
        while k < last and document[k].isspace():
            k += 1
        if k == j or k >= last:
            # No whitespace after the terminator, or nothing but trailing
            # whitespace left: not a boundary.
            i += 1
            continue
        nxt = document[k]
        if not (nxt.isupper() or nxt in _OPENERS):
            i += 1
            continue
        if ch == "." and _is_abbreviation(document, i):
            i += 1
            continue
        starts.append(k)
        i = k

    spans = []
    for n, start in enumerate(starts):
        end = starts[n + 1] if n + 1 < len(starts) else last
        text = document[start:end]
        spans.append(SentenceSpan(text, start, end, count_tokens(text, tok)))
    return spans


def _split_oversize(span: SentenceSpan, k: int, tok: Tokenizer) -> list[SentenceSpan]:
    """Split a sentence with >= k tokens at token boundaries into pieces < k.

    Pieces are as equal as possible and partition the span's text exactly,
    so reassembly stays lossless.
    """
    spans = tok.token_spans(span.text)
    n = len(spans)
    per_piece = k - 1
    num_pieces = -(-n // per_piece)
    base, extra = divmod(n, num_pieces)
    sizes = [base + 1] * extra + [base] * (num_pieces - extra)

    pieces = []
    token_cursor = 0
    char_cursor = 0
    for size in sizes:
        token_end = token_cursor + size
        char_end = len(span.text) if token_end >= n else spans[token_end][0]
        text = span.text[char_cursor:char_end]
        pieces.append(
            SentenceSpan(
                text,
                span.char_start + char_cursor,
                span.char_start + char_end,
                count_tokens(text, tok),
            )
        )
        token_cursor = token_end
        char_cursor = char_end
    return pieces


def chunk_sentences(
    sentences: list[SentenceSpan],
    k: int,
    tokenizer: Tokenizer | None = None,
) -> list[DocumentChunk]:
    """Greedy sequential packing of sentences into chunks of < ``k`` tokens.

    Sentences append to the current chunk while the chunk text stays below
    k tokens; a sentence that would push it to k or beyond starts a new
    chunk.  A single sentence whose own count is >= k is first split at
    token boundaries into near-equal pieces below k.
    """
    if k < 2:
        raise ConfigurationError(f"chunk token limit must be >= 2, got {k}")
    tok = tokenizer if tokenizer is not None else DEFAULT_TOKENIZER

    pieces: list[SentenceSpan] = []
    for sentence in sentences:
        if sentence.token_count >= k:
            split = _split_oversize(sentence, k, tok)
            logger.debug(
                "split %d-token sentence at %d into %d pieces",
                sentence.token_count, sentence.char_start, len(split),
            )
            pieces.extend(split)
        else:
            pieces.append(sentence)

    chunks: list[DocumentChunk] = []
    current: list[SentenceSpan] = []
    current_text = ""

    def flush() -> None:
        nonlocal current, current_text
        if current:
            chunks.append(
                DocumentChunk(
                    chunk_index=len(chunks),
                    sentences=current,
                    token_count=count_tokens(current_text, tok),
                )
            )
            current = []
            current_text = ""

    for piece in pieces:
        if current:
            candidate = current_text + piece.text
            if count_tokens(candidate, tok) >= k:
                flush()
                current = [piece]
                current_text = piece.text
                continue
            current.append(piece)
            current_text = candidate
        else:
            current = [piece]
            current_text = piece.text
    flush()
    return chunks


def cluster_chunks(chunks: list[DocumentChunk], l: int) -> list[ChunkCluster]:
    """Partition chunks sequentially into groups of ``l``; the last group may
    be short.  Assigns ``cluster_index`` on each chunk in place."""
    if l < 1:
        raise ConfigurationError(f"cluster size must be >= 1, got {l}")
    clusters: list[ChunkCluster] = []
    for chunk in chunks:
        cluster_index = chunk.chunk_index // l
        if cluster_index == len(clusters):
            clusters.append(ChunkCluster(cluster_index=cluster_index))
        chunk.cluster_index = cluster_index
        clusters[cluster_index].chunk_indices.append(chunk.chunk_index)
    return clusters
