"""Offset-preserving text decomposition and span algebra.

Everything downstream (keyword extraction, sketch projection, metrics)
works on the `Document` produced here, so the contract is strict:
token character spans never overlap, and joining token surfaces with the
original inter-token gaps reproduces the input byte-for-byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

# A word token is a maximal run of letters/digits/apostrophes; every other
# non-space character is a single-character punctuation token.  [^\W_]
# matches Unicode letters and digits but not the underscore.
_TOKEN_RE = re.compile(r"(?:[^\W_]|')+|[^\s]")
_ALNUM_RE = re.compile(r"[^\W_]")


@dataclass(frozen=True)
class Token:
    surface: str
    char_start: int
    char_end: int
    is_word: bool


@dataclass(frozen=True)
class Span:
    """Half-open token index range [start_token, end_token)."""

    start_token: int
    end_token: int

    def __post_init__(self) -> None:
        if self.start_token < 0 or self.start_token >= self.end_token:
            raise ValueError(f"invalid span ({self.start_token}, {self.end_token})")

    def __len__(self) -> int:
        return self.end_token - self.start_token


@dataclass(frozen=True)
class Sentence:
    """Half-open token index range of one sentence."""

    start_token: int
    end_token: int


@dataclass(frozen=True)
class NGram:
    span: Span
    n: int
    surface: str


class Document:
    """Raw text plus its token/sentence decomposition.

    `length_words` counts word tokens only; punctuation tokens are kept in
    the token sequence (they matter for gap masking) but never enter
    n-grams or the word count.
    """

    __slots__ = ("raw", "tokens", "sentences", "_word_indices")

    def __init__(self, raw: str, tokens: Sequence[Token], sentences: Sequence[Sentence]):
        self.raw = raw
        self.tokens: tuple[Token, ...] = tuple(tokens)
        self.sentences: tuple[Sentence, ...] = tuple(sentences)
        self._word_indices: tuple[int, ...] | None = None

    @property
    def length_words(self) -> int:
        return len(self.word_indices())

    def word_indices(self) -> tuple[int, ...]:
        if self._word_indices is None:
            self._word_indices = tuple(
                i for i, t in enumerate(self.tokens) if t.is_word
            )
        return self._word_indices

    def span_text(self, span: Span) -> str:
        """Verbatim document substring covered by a token span."""
        first = self.tokens[span.start_token]
        last = self.tokens[span.end_token - 1]
        return self.raw[first.char_start : last.char_end]

    def __repr__(self) -> str:  # pragma: no cover
        return f"Document(tokens={len(self.tokens)}, l={self.length_words})"


def tokenize(text: str) -> Document:
    """Split text into offset-preserving tokens and sentences.

    Word tokens are maximal runs of letters/digits/apostrophes; each other
    non-space character becomes its own punctuation token.  Runs made of
    apostrophes only carry no word content and are split into punctuation
    tokens.
    """
    tokens: list[Token] = []
    for m in _TOKEN_RE.finditer(text):
        surface = m.group()
        if _ALNUM_RE.search(surface):
            tokens.append(Token(surface, m.start(), m.end(), True))
        elif len(surface) == 1:
            tokens.append(Token(surface, m.start(), m.end(), False))
        else:
            # apostrophe-only run: one punctuation token per character
            for off, ch in enumerate(surface):
                tokens.append(Token(ch, m.start() + off, m.start() + off + 1, False))
    sentences = _split_sentences(text, tokens)
    return Document(text, tokens, sentences)


def _split_sentences(text: str, tokens: Sequence[Token]) -> list[Sentence]:
    """Boundary after '.', '!' or '?' followed by whitespace and a capital,
    or at end of text; any newline in an inter-token gap is a hard boundary.
    """
    if not tokens:
        return []
    boundaries: list[int] = []
    for i in range(len(tokens) - 1):
        gap = text[tokens[i].char_end : tokens[i + 1].char_start]
        if "\n" in gap or "\r" in gap:
            boundaries.append(i + 1)
            continue
        if gap and tokens[i].surface[-1] in ".!?":
            nxt = tokens[i + 1].surface[0]
            if nxt.isupper():
                boundaries.append(i + 1)
    sentences = []
    start = 0
    for b in boundaries:
        sentences.append(Sentence(start, b))
        start = b
    sentences.append(Sentence(start, len(tokens)))
    return sentences


def split_sentences(document: Document) -> tuple[Sentence, ...]:
    return document.sentences


def enumerate_ngrams(document: Document, n_min: int = 1, n_max: int = 3) -> list[NGram]:
    """All contiguous word-token n-grams, sentence by sentence.

    Punctuation tokens are transparent: they never appear inside an n-gram
    and do not break contiguity of the surrounding word tokens.  Output is
    ordered by n, then document position.
    """
    if n_min < 1 or n_min > n_max:
        raise ValueError(f"invalid n-gram range [{n_min}, {n_max}]")
    per_sentence: list[list[int]] = []
    for sent in document.sentences:
        ws = [
            i
            for i in range(sent.start_token, sent.end_token)
            if document.tokens[i].is_word
        ]
        if ws:
            per_sentence.append(ws)
    out: list[NGram] = []
    for n in range(n_min, n_max + 1):
        for ws in per_sentence:
            for j in range(len(ws) - n + 1):
                idxs = ws[j : j + n]
                span = Span(idxs[0], idxs[-1] + 1)
                surface = " ".join(document.tokens[k].surface for k in idxs)
                out.append(NGram(span, n, surface))
    return out


def merge_spans(spans: Iterable[Span | tuple[int, int]]) -> list[Span]:
    """Union of overlapping or adjacent token spans, sorted and maximal."""
    normalized = [s if isinstance(s, Span) else Span(*s) for s in spans]
    if not normalized:
        return []
    normalized.sort(key=lambda s: (s.start_token, s.end_token))
    merged = [normalized[0]]
    for s in normalized[1:]:
        last = merged[-1]
        if s.start_token <= last.end_token:
            if s.end_token > last.end_token:
                merged[-1] = Span(last.start_token, s.end_token)
        else:
            merged.append(s)
    return merged


def lcs_length(a_tokens: Sequence[str], b_tokens: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b))."""
    if not a_tokens or not b_tokens:
        return 0
    if len(b_tokens) > len(a_tokens):
        a_tokens, b_tokens = b_tokens, a_tokens
    prev = [0] * (len(b_tokens) + 1)
    for x in a_tokens:
        cur = [0]
        for j, y in enumerate(b_tokens, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]
