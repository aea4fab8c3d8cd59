"""Deterministic token counting for every budget check in the pipeline.

All chunk limits, context limits, and ROUGE tokenization go through this
module so the numbers are reproducible without shipping a model vocabulary.
The default rule is frozen: text splits on Unicode whitespace, and every
punctuation character (Unicode category P*) is detached as its own token.
Counting is always applied to final strings — callers must not assume
count(a) + count(b) == count(a + b).
"""

from __future__ import annotations

import unicodedata
from typing import Protocol


class Tokenizer(Protocol):
    def token_spans(self, text: str) -> list[tuple[int, int]]: ...


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


class WordPunctTokenizer:
    """The frozen default: whitespace-separated words with punctuation detached.

    A token is either a maximal run of characters that are neither whitespace
    nor punctuation, or a single punctuation character.  "hello world" -> 2
    tokens; "Hello, world!" -> 4.  Symbol characters (category S*, e.g. "$")
    count as word characters.
    """

    def token_spans(self, text: str) -> list[tuple[int, int]]:
        spans: list[tuple[int, int]] = []
        start = None
        for i, ch in enumerate(text):
            if ch.isspace():
                if start is not None:
                    spans.append((start, i))
                    start = None
            elif _is_punct(ch):
                if start is not None:
                    spans.append((start, i))
                    start = None
                spans.append((i, i + 1))
            elif start is None:
                start = i
        if start is not None:
            spans.append((start, len(text)))
        return spans

    def tokenize(self, text: str) -> list[str]:
        return [text[a:b] for a, b in self.token_spans(text)]


DEFAULT_TOKENIZER = WordPunctTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Number of tokens in ``text`` under the given (default) tokenizer."""
    tok = tokenizer if tokenizer is not None else DEFAULT_TOKENIZER
    return len(tok.token_spans(text))
