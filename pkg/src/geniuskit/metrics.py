"""Model-free evaluation of sketch-conditioned generation.

All metrics case-fold before matching and are insensitive to leading,
trailing and run-length whitespace; punctuation marks participate as
tokens.  Percentages are returned in [0, 100].
"""

from __future__ import annotations

import re
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .sketcher import DEFAULT_MASK_TOKEN, Sketch
from .textcore import lcs_length, tokenize

_WS_RE = re.compile(r"\s+")


def _tokens(text: str) -> list[str]:
    return [t.surface.casefold() for t in tokenize(text).tokens]


def _word_count(text: str) -> int:
    return tokenize(text).length_words


def _normalize(text: str) -> str:
    return _WS_RE.sub(" ", text.casefold()).strip()


def _fragments_of(sketch: Sketch | str, mask_token: str) -> tuple[str, ...]:
    if isinstance(sketch, Sketch):
        return sketch.fragments
    pieces = (p.strip() for p in sketch.split(mask_token))
    return tuple(p for p in pieces if p)


@dataclass(frozen=True)
class EvalRecord:
    original: str
    sketch: Sketch | str
    generated: str


@dataclass
class MetricReport:
    sketch_lost: float
    recall: float
    diversity: float
    length_ratio: float
    masking_ratio_mean: float
    masking_ratio_std: float
    n: int
    perplexity: float | None = None  # reserved for externally supplied scores
    clf_error: float | None = None

    def to_dict(self) -> dict:
        return {
            "sketch_lost": self.sketch_lost,
            "recall": self.recall,
            "diversity": self.diversity,
            "length_ratio": self.length_ratio,
            "masking_ratio_mean": self.masking_ratio_mean,
            "masking_ratio_std": self.masking_ratio_std,
            "n": self.n,
            "perplexity": self.perplexity,
            "clf_error": self.clf_error,
        }


def sketch_lost(
    sketch: Sketch | str, generated: str, mask_token: str = DEFAULT_MASK_TOKEN
) -> float:
    """Mean of word-level and fragment-level missing percentages.

    Word level: distinct sketch tokens absent from the generated token set.
    Fragment level: fragments absent as contiguous (case-folded,
    whitespace-collapsed) substrings of the generated text.
    """
    fragments = _fragments_of(sketch, mask_token)
    if not fragments:
        raise ValueError("sketch-lost undefined for a sketch with no fragments")
    sketch_words = set()
    for frag in fragments:
        sketch_words.update(_tokens(frag))
    generated_words = set(_tokens(generated))
    word_missing = (
        len(sketch_words - generated_words) / len(sketch_words) if sketch_words else 0.0
    )
    generated_norm = _normalize(generated)
    frag_missing = sum(
        1 for frag in fragments if _normalize(frag) not in generated_norm
    ) / len(fragments)
    return 100.0 * (word_missing + frag_missing) / 2.0


def _clipped_ngram_recall(original: Sequence[str], generated: Sequence[str], n: int) -> float:
    if len(original) < n:
        return 0.0
    ref = Counter(tuple(original[i : i + n]) for i in range(len(original) - n + 1))
    cand = Counter(tuple(generated[i : i + n]) for i in range(len(generated) - n + 1))
    matched = sum(min(count, cand[gram]) for gram, count in ref.items())
    return matched / sum(ref.values())


def recall(original: str, generated: str) -> float:
    """Mean of unigram recall, bigram recall and LCS/|original|, x100."""
    o = _tokens(original)
    if not o:
        raise ValueError("recall undefined for empty original")
    g = _tokens(generated)
    uni = _clipped_ngram_recall(o, g, 1)
    bi = _clipped_ngram_recall(o, g, 2)  # 0 when original has < 2 tokens
    lcs = lcs_length(o, g) / len(o)
    return 100.0 * (uni + bi + lcs) / 3.0


def diversity(original: str, generated: str) -> float:
    """Share of generated word types not present in the original, x100."""
    g_types = set(_tokens(generated))
    if not g_types:
        return 0.0
    o_types = set(_tokens(original))
    return 100.0 * len(g_types - o_types) / len(g_types)


def length_ratio(original: str, generated: str) -> float:
    o = _word_count(original)
    if o == 0:
        raise ValueError("length ratio undefined for original with no words")
    return _word_count(generated) / o


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float


def _prf(matched: float, ref_total: int, cand_total: int) -> RougeScore:
    r = matched / ref_total if ref_total else 0.0
    p = matched / cand_total if cand_total else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return RougeScore(100.0 * r, 100.0 * p, 100.0 * f1)


def rouge_n(reference: str, candidate: str, n: int) -> RougeScore:
    if n not in (1, 2):
        raise ValueError("rouge-n supports n in {1, 2}")
    ref = _tokens(reference)
    if not ref:
        raise ValueError("rouge undefined for empty reference")
    cand = _tokens(candidate)
    ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    cand_grams = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
    matched = sum(min(c, cand_grams[g]) for g, c in ref_grams.items())
    return _prf(matched, sum(ref_grams.values()), sum(cand_grams.values()))


def rouge_l(reference: str, candidate: str) -> RougeScore:
    ref = _tokens(reference)
    if not ref:
        raise ValueError("rouge undefined for empty reference")
    cand = _tokens(candidate)
    lcs = lcs_length(ref, cand)
    return _prf(lcs, len(ref), len(cand))


def record_masking_ratio(record: EvalRecord, mask_token: str = DEFAULT_MASK_TOKEN) -> float:
    """Masking ratio recovered from sketch text: fragments are verbatim
    non-overlapping spans, so their word count equals the kept words."""
    total = _word_count(record.original)
    if total == 0:
        raise ValueError("masking ratio undefined for empty original")
    kept = sum(_word_count(frag) for frag in _fragments_of(record.sketch, mask_token))
    return max(0.0, 1.0 - kept / total)


def evaluate_record(record: EvalRecord, mask_token: str = DEFAULT_MASK_TOKEN) -> dict:
    return {
        "sketch_lost": sketch_lost(record.sketch, record.generated, mask_token),
        "recall": recall(record.original, record.generated),
        "diversity": diversity(record.original, record.generated),
        "length_ratio": length_ratio(record.original, record.generated),
        "masking_ratio": record_masking_ratio(record, mask_token),
    }


def evaluate_corpus(
    records: Sequence[EvalRecord], mask_token: str = DEFAULT_MASK_TOKEN
) -> MetricReport:
    """Unweighted per-record means (macro averaging)."""
    if not records:
        raise ValueError("evaluate_corpus needs at least one record")
    rows = [evaluate_record(r, mask_token) for r in records]
    ratios = [row["masking_ratio"] for row in rows]
    return MetricReport(
        sketch_lost=statistics.fmean(row["sketch_lost"] for row in rows),
        recall=statistics.fmean(row["recall"] for row in rows),
        diversity=statistics.fmean(row["diversity"] for row in rows),
        length_ratio=statistics.fmean(row["length_ratio"] for row in rows),
        masking_ratio_mean=100.0 * statistics.fmean(ratios),
        masking_ratio_std=100.0 * (statistics.pstdev(ratios) if len(ratios) > 1 else 0.0),
        n=len(rows),
    )
