"""Keyword projection and rendering of the five sketch templates.

A sketch is an ordered sequence of kept fragments and mask placeholders.
Internally elements are `str` fragments with `None` standing for a mask;
rendering joins them with single spaces, substituting the mask token.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Sequence

from .extractors import ExtractorConfig, Keyword, random_extract, yake_extract
from .textcore import Document, Span, merge_spans, tokenize

DEFAULT_MASK_TOKEN = "<mask>"


class Template(str, enum.Enum):
    T1 = "t1"
    T2 = "t2"
    T3 = "t3"
    T4 = "t4"
    T4_RANDOM = "t4random"


class DocumentSkipped(Exception):
    """Raised when a document cannot produce a pair; carries the reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class ProjectedKeyword:
    keyword: Keyword
    first_token: int | None  # None when the keyword never matched


@dataclass(frozen=True)
class Projection:
    document: Document
    kept_spans: tuple[Span, ...]
    keywords: tuple[ProjectedKeyword, ...]

    @property
    def unmatched(self) -> tuple[str, ...]:
        return tuple(pk.keyword.surface for pk in self.keywords if pk.first_token is None)

    def fragments(self) -> list[str]:
        return [self.document.span_text(span) for span in self.kept_spans]


@dataclass(frozen=True)
class Sketch:
    elements: tuple[str | None, ...]  # None = mask placeholder
    template: Template
    mask_token: str = DEFAULT_MASK_TOKEN
    prompt: str | None = None
    source_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for a, b in zip(self.elements, self.elements[1:]):
            if a is None and b is None:
                raise ValueError("sketch contains two consecutive masks")
        if any(e == "" for e in self.elements):
            raise ValueError("sketch fragments must be non-empty")

    @property
    def fragments(self) -> tuple[str, ...]:
        return tuple(e for e in self.elements if e is not None)

    @property
    def text(self) -> str:
        return " ".join(
            self.mask_token if e is None else e for e in self.elements
        )


@dataclass(frozen=True)
class SketchTextPair:
    sketch: str
    text: str


def _coerce_keywords(keywords: Sequence[Keyword | str]) -> list[Keyword]:
    out = []
    for i, kw in enumerate(keywords):
        if isinstance(kw, Keyword):
            out.append(kw)
        else:
            out.append(Keyword(surface=kw, score=float(i), rank=i))
    return out


def _sentence_word_arrays(document: Document) -> list[tuple[list[int], list[str]]]:
    arrays = []
    for sent in document.sentences:
        ws = [
            i
            for i in range(sent.start_token, sent.end_token)
            if document.tokens[i].is_word
        ]
        if ws:
            arrays.append((ws, [document.tokens[i].surface.lower() for i in ws]))
    return arrays


_SIMPLE_KEYWORD_RE = re.compile(r"^[^\W_']+(?: [^\W_']+)*$")


def _keyword_needle(surface: str) -> list[str]:
    """Word tokens of a keyword surface, lowercased.

    Extractor keywords are space-joined word tokens, so a split suffices;
    surfaces carrying punctuation (user-supplied lists) go through the
    tokenizer so they match the document's word decomposition.
    """
    if _SIMPLE_KEYWORD_RE.match(surface):
        return surface.lower().split(" ")
    kw_doc = tokenize(surface)
    return [kw_doc.tokens[i].surface.lower() for i in kw_doc.word_indices()]


def _scan_occurrences(
    arrays: list[tuple[list[int], list[str]]], needle: list[str]
) -> list[Span]:
    n = len(needle)
    first = needle[0]
    spans: list[Span] = []
    for ws, surfaces in arrays:
        for j in range(len(surfaces) - n + 1):
            if surfaces[j] == first and surfaces[j : j + n] == needle:
                spans.append(Span(ws[j], ws[j + n - 1] + 1))
    return spans


def _find_occurrences(document: Document, keyword_surface: str) -> list[Span]:
    """Case-insensitive word-token sequence matches, within a sentence.

    The returned token spans run from the first to the last matched word
    token, so interior punctuation (e.g. a dash splicing two words) ends
    up inside the kept span and the fragment stays a verbatim substring.
    """
    kw_doc = tokenize(keyword_surface)
    needle = [kw_doc.tokens[i].surface.lower() for i in kw_doc.word_indices()]
    if not needle:
        return []
    return _scan_occurrences(_sentence_word_arrays(document), needle)


def project(document: Document, keywords: Sequence[Keyword | str]) -> Projection:
    """Mark every occurrence of every keyword as kept; merge overlaps.

    Keywords that never match are recorded on the projection instead of
    raising -- normalization drift between extractor and text is possible
    and should be observable, not fatal.
    """
    coerced = _coerce_keywords(keywords)
    arrays = _sentence_word_arrays(document)
    all_spans: list[Span] = []
    projected: list[ProjectedKeyword] = []
    for kw in coerced:
        needle = _keyword_needle(kw.surface)
        occ = _scan_occurrences(arrays, needle) if needle else []
        if occ:
            all_spans.extend(occ)
            projected.append(ProjectedKeyword(kw, min(s.start_token for s in occ)))
        else:
            projected.append(ProjectedKeyword(kw, None))
    return Projection(
        document=document,
        kept_spans=tuple(merge_spans(all_spans)),
        keywords=tuple(projected),
    )


def projection_from_spans(document: Document, spans: Sequence[Span]) -> Projection:
    """Projection over pre-selected spans (the random-extraction path)."""
    return Projection(document=document, kept_spans=tuple(merge_spans(spans)), keywords=())


def render(
    projection: Projection,
    template: Template = Template.T4,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> Sketch:
    doc = projection.document
    if template is Template.T1:
        matched = [pk for pk in projection.keywords if pk.first_token is not None]
        matched.sort(key=lambda pk: pk.keyword.rank)
        elements: tuple[str | None, ...] = tuple(pk.keyword.surface for pk in matched)
    elif template is Template.T2:
        matched = [pk for pk in projection.keywords if pk.first_token is not None]
        matched.sort(key=lambda pk: pk.first_token)
        elements = tuple(pk.keyword.surface for pk in matched)
    elif template is Template.T3:
        elements = tuple(projection.fragments())
    else:  # T4 / T4-random
        if not projection.kept_spans:
            elements = (None,)
        else:
            parts: list[str | None] = []
            if projection.kept_spans[0].start_token > 0:
                parts.append(None)
            for i, span in enumerate(projection.kept_spans):
                if i > 0:
                    parts.append(None)
                parts.append(doc.span_text(span))
            if projection.kept_spans[-1].end_token < len(doc.tokens):
                parts.append(None)
            elements = tuple(parts)
    return Sketch(elements=elements, template=template, mask_token=mask_token)


def masking_ratio(projection: Projection) -> float:
    """Fraction of word tokens not covered by kept spans."""
    doc = projection.document
    l = doc.length_words
    if l == 0:
        raise ValueError("masking ratio undefined for a document with no words")
    kept = 0
    for span in projection.kept_spans:
        kept += sum(
            1
            for i in range(span.start_token, span.end_token)
            if doc.tokens[i].is_word
        )
    return 1.0 - kept / l


def mixup_sketch(
    projections: Sequence[Projection],
    mask_token: str = DEFAULT_MASK_TOKEN,
    source_ids: Sequence[str] = (),
    prompt: str | None = None,
) -> Sketch:
    """Interleave the kept fragments of several same-label records.

    Fragments are taken round-robin across records, preserving each
    record's internal order, with a mask between every pair of fragments
    and at both ends.  Records contributing no fragments are dropped; at
    least two usable records are required.
    """
    usable: list[tuple[list[str], str | None]] = []
    ids = list(source_ids) if source_ids else [""] * len(projections)
    if len(ids) != len(projections):
        raise ValueError("source_ids must parallel projections")
    for proj, rid in zip(projections, ids):
        frags = proj.fragments()
        if frags:
            usable.append((frags, rid))
    if len(usable) < 2:
        raise ValueError("sketch mixup needs at least two records with fragments")
    elements: list[str | None] = [None]
    round_idx = 0
    remaining = True
    while remaining:
        remaining = False
        for frags, _ in usable:
            if round_idx < len(frags):
                elements.append(frags[round_idx])
                elements.append(None)
                remaining = True
        round_idx += 1
    return Sketch(
        elements=tuple(elements),
        template=Template.T4,
        mask_token=mask_token,
        prompt=prompt,
        source_ids=tuple(rid for _, rid in usable if rid),
    )


def build_projection(
    document: Document,
    config: ExtractorConfig,
    template: Template = Template.T4,
) -> Projection:
    if template is Template.T4_RANDOM:
        return projection_from_spans(document, random_extract(document, config))
    return project(document, yake_extract(document, config))


def build_pair(
    document: Document,
    config: ExtractorConfig | None = None,
    template: Template = Template.T4,
    mask_token: str = DEFAULT_MASK_TOKEN,
    min_words: int = 1,
    max_words: int | None = None,
) -> SketchTextPair:
    pair, _ = build_pair_with_stats(
        document, config, template, mask_token, min_words, max_words
    )
    return pair


def build_pair_with_stats(
    document: Document,
    config: ExtractorConfig | None = None,
    template: Template = Template.T4,
    mask_token: str = DEFAULT_MASK_TOKEN,
    min_words: int = 1,
    max_words: int | None = None,
) -> tuple[SketchTextPair, float]:
    """Extract, project and render one pre-training pair; also returns the
    masking ratio so corpus runs can aggregate it without re-extracting."""
    config = config or ExtractorConfig()
    l = document.length_words
    if l == 0:
        raise DocumentSkipped("empty")
    if l < min_words or (max_words is not None and l > max_words):
        raise DocumentSkipped("length")
    projection = build_projection(document, config, template)
    sketch = render(projection, template, mask_token)
    return SketchTextPair(sketch=sketch.text, text=document.raw), masking_ratio(projection)
