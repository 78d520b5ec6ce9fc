"""Keyword and key-phrase selection strategies.

Three extractors share one candidate generator (1..max_ngram word n-grams
that neither start nor end with a stopword):

* ``yake_extract``     -- unsupervised statistical scoring, lower = better
* ``random_extract``   -- seeded uniform n-gram sampling for random sketches
* ``target_aware_extract`` -- ranks candidates by cosine similarity to a
  fused document/target embedding, higher = better
"""

from __future__ import annotations

import math
import random
import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from ._stopwords import ENGLISH_STOPWORDS
from .textcore import Document, NGram, Span, enumerate_ngrams, merge_spans


class EmbeddingDimensionError(ValueError):
    """Embedder returned vectors of inconsistent dimension."""


@dataclass(frozen=True)
class Keyword:
    surface: str
    score: float
    rank: int


@dataclass(frozen=True)
class TargetInfo:
    """Task-dependent conditioning text: class label, entity list or question."""

    text: str
    kind: str = "class-label"

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("target info text must be non-empty")


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


@dataclass(frozen=True)
class TopkRule:
    """max(ceil(l / divisor), minimum); picklable for worker pools."""

    divisor: int = 5
    minimum: int = 10

    def __call__(self, length_words: int) -> int:
        return max(math.ceil(length_words / self.divisor), self.minimum)


@dataclass(frozen=True)
class ConstantTopk:
    value: int

    def __call__(self, length_words: int) -> int:
        return self.value


default_topk = TopkRule()


@dataclass(frozen=True)
class ExtractorConfig:
    max_ngram: int = 3
    topk_rule: Callable[[int], int] = default_topk
    keep_ratio: float = 0.20
    tri_lambda: float = 0.5
    stopwords: frozenset[str] = ENGLISH_STOPWORDS
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.max_ngram < 1:
            raise ValueError("max_ngram must be >= 1")
        if not 0.0 <= self.tri_lambda <= 1.0:
            raise ValueError("tri_lambda must be in [0, 1]")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ValueError("keep_ratio must be in (0, 1]")


@dataclass
class Candidate:
    surface: str          # original casing of the first occurrence
    key: str              # lowercased match key
    n: int
    first_span: Span
    count: int = 1
    terms: tuple[str, ...] = ()


def candidate_ngrams(document: Document, config: ExtractorConfig) -> list[Candidate]:
    """Unique candidate n-grams in first-occurrence order.

    A candidate never starts or ends with a stopword; interior stopwords
    are allowed (so phrases like "branch of AI" survive).
    """
    stop = config.stopwords
    seen: dict[str, Candidate] = {}
    for ng in enumerate_ngrams(document, 1, config.max_ngram):
        words = ng.surface.split(" ")
        if words[0].lower() in stop or words[-1].lower() in stop:
            continue
        key = ng.surface.lower()
        cand = seen.get(key)
        if cand is None:
            seen[key] = Candidate(
                surface=ng.surface,
                key=key,
                n=ng.n,
                first_span=ng.span,
                terms=tuple(w.lower() for w in words),
            )
        else:
            cand.count += 1
    return sorted(seen.values(), key=lambda c: (c.first_span.start_token, c.n))


# --- statistical (YAKE-style) scoring -------------------------------------


class _TermStats:
    __slots__ = ("tf", "caps", "acro", "sentence_ids", "lefts", "rights")

    def __init__(self) -> None:
        self.tf = 0
        self.caps = 0
        self.acro = 0
        self.sentence_ids: list[int] = []
        self.lefts: list[str] = []
        self.rights: list[str] = []


class _DocStats:
    """Per-term scores plus the frequencies needed for phrase scoring."""

    __slots__ = ("scores", "tf", "bigrams")

    def __init__(self, scores: dict[str, float], tf: dict[str, int], bigrams: dict[tuple[str, str], int]):
        self.scores = scores
        self.tf = tf
        self.bigrams = bigrams


def _doc_stats(document: Document) -> _DocStats:
    stats: dict[str, _TermStats] = defaultdict(_TermStats)
    bigrams: dict[tuple[str, str], int] = defaultdict(int)
    n_sentences = max(len(document.sentences), 1)
    for s_idx, sent in enumerate(document.sentences):
        words = [
            document.tokens[i].surface
            for i in range(sent.start_token, sent.end_token)
            if document.tokens[i].is_word
        ]
        for pos, surface in enumerate(words):
            term = surface.lower()
            st = stats[term]
            st.tf += 1
            if surface[0].isupper():
                st.caps += 1
            if len(surface) > 1 and surface.isupper():
                st.acro += 1
            st.sentence_ids.append(s_idx)
            if pos > 0:
                st.lefts.append(words[pos - 1].lower())
                bigrams[(words[pos - 1].lower(), term)] += 1
            if pos < len(words) - 1:
                st.rights.append(words[pos + 1].lower())
    if not stats:
        return _DocStats({}, {}, {})
    tfs = [st.tf for st in stats.values()]
    mean_tf = statistics.fmean(tfs)
    std_tf = statistics.pstdev(tfs)
    max_tf = max(tfs)
    scores: dict[str, float] = {}
    for term, st in stats.items():
        t_case = max(st.caps, st.acro) / (1.0 + math.log(st.tf))
        t_pos = math.log(math.log(3.0 + statistics.median(st.sentence_ids)))
        t_fnorm = st.tf / (mean_tf + std_tf)
        dl = len(set(st.lefts)) / len(st.lefts) if st.lefts else 0.0
        dr = len(set(st.rights)) / len(st.rights) if st.rights else 0.0
        t_rel = 1.0 + (dl + dr) * st.tf / max_tf
        t_sent = len(set(st.sentence_ids)) / n_sentences
        scores[term] = (t_rel * t_pos) / (t_case + t_fnorm / t_rel + t_sent / t_rel)
    return _DocStats(scores, {t: st.tf for t, st in stats.items()}, dict(bigrams))


def _near_duplicates(a: str, b: str, threshold: float = 0.9) -> bool:
    """True when 1 - levenshtein/max_len >= threshold.

    The length gap alone bounds the similarity, so most pairs bail out
    before the DP (this runs for every candidate pair in the top-k cut).
    """
    if a == b:
        return True
    la, lb = len(a), len(b)
    if not la or not lb:
        return False
    max_len = max(la, lb)
    budget = (1.0 - threshold) * max_len
    if abs(la - lb) > budget:
        return False
    prev = list(range(lb + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        append = cur.append
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            append(min(prev[j] + 1, cur[-1] + 1, prev[j - 1] + cost))
        if min(cur) > budget:
            return False
        prev = cur
    return prev[-1] <= budget


def yake_extract(document: Document, config: ExtractorConfig | None = None) -> list[Keyword]:
    """Rank candidate n-grams by the statistical phrase score, best first.

    Phrase score: product of member-term scores divided by
    TF(phrase) * (1 + sum of member-term scores); lower is better.
    Near-duplicate surfaces (edit similarity >= 0.9) are deduplicated,
    keeping the better-scored one, before the top-k cut.
    """
    config = config or ExtractorConfig()
    if document.length_words == 0:
        return []
    stats = _doc_stats(document)
    scored: list[tuple[float, Candidate]] = []
    for cand in candidate_ngrams(document, config):
        prod = 1.0
        ssum = 0.0
        for i, term in enumerate(cand.terms):
            if term in config.stopwords and 0 < i < len(cand.terms) - 1:
                # interior stopword: damp by bigram cohesion with its
                # neighbours instead of letting a near-zero term score
                # inflate the product
                prev_t = cand.terms[i - 1]
                next_t = cand.terms[i + 1]
                p_before = stats.bigrams.get((prev_t, term), 0) / stats.tf[prev_t]
                p_after = stats.bigrams.get((term, next_t), 0) / stats.tf[term]
                prob = p_before * p_after
                prod *= 1.0 + (1.0 - prob)
                ssum += 1.0 - prob
            else:
                s = stats.scores[term]
                prod *= s
                ssum += s
        score = prod / (cand.count * (1.0 + ssum))
        scored.append((score, cand))
    scored.sort(key=lambda sc: (sc[0], sc[1].first_span.start_token, sc[1].n))
    kept: list[tuple[float, Candidate]] = []
    limit = config.topk_rule(document.length_words)
    for score, cand in scored:
        if any(_near_duplicates(cand.key, k.key) for _, k in kept):
            continue
        kept.append((score, cand))
        if len(kept) >= limit:
            break
    return [
        Keyword(surface=c.surface, score=s, rank=i) for i, (s, c) in enumerate(kept)
    ]


def random_extract(document: Document, config: ExtractorConfig | None = None) -> list[Span]:
    """Seeded, non-overlapping random word n-grams until at least
    ceil(l / 5) words are kept; spans are merged before return."""
    config = config or ExtractorConfig()
    l = document.length_words
    if l == 0:
        return []
    rng = random.Random(config.seed)
    pools: dict[int, list[NGram]] = defaultdict(list)
    for ng in enumerate_ngrams(document, 1, config.max_ngram):
        pools[ng.n].append(ng)
    target = math.ceil(l / 5)
    taken: list[Span] = []
    covered: set[int] = set()
    kept_words = 0
    available_ns = [n for n in pools if pools[n]]
    while kept_words < target and available_ns:
        n = rng.choice(available_ns)
        free = [
            ng
            for ng in pools[n]
            if not covered.intersection(range(ng.span.start_token, ng.span.end_token))
        ]
        if not free:
            available_ns.remove(n)
            continue
        pick = free[rng.randrange(len(free))]
        taken.append(pick.span)
        covered.update(range(pick.span.start_token, pick.span.end_token))
        kept_words += pick.n
    return merge_spans(taken)


# --- target-aware ranking ---------------------------------------------------


def fuse_embeddings(
    e_d: Sequence[float], e_t: Sequence[float], tri_lambda: float
) -> list[float]:
    """Componentwise lambda * document + (1 - lambda) * target."""
    if len(e_d) != len(e_t):
        raise EmbeddingDimensionError(
            f"embedding dims differ: {len(e_d)} vs {len(e_t)}"
        )
    return [tri_lambda * d + (1.0 - tri_lambda) * t for d, t in zip(e_d, e_t)]


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity; zero vectors are defined to have similarity 0."""
    if len(u) != len(v):
        raise EmbeddingDimensionError(f"vector dims differ: {len(u)} vs {len(v)}")
    dot = 0.0
    nu = 0.0
    nv = 0.0
    for a, b in zip(u, v):
        dot += a * b
        nu += a * a
        nv += b * b
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / math.sqrt(nu * nv)


def target_aware_extract(
    document: Document,
    tri: TargetInfo,
    embedder: Embedder,
    config: ExtractorConfig | None = None,
) -> list[Keyword]:
    """Rank unique candidates by similarity to the fused embedding of the
    document and the target info; keep the top ceil(keep_ratio * count),
    at least one.  Ties break toward earlier first occurrence, then
    shorter n."""
    config = config or ExtractorConfig()
    candidates = candidate_ngrams(document, config)
    if not candidates:
        return []
    texts = [document.raw, tri.text] + [c.surface for c in candidates]
    vectors = embedder.embed(texts)
    if len(vectors) != len(texts):
        raise EmbeddingDimensionError(
            f"embedder returned {len(vectors)} vectors for {len(texts)} texts"
        )
    e_f = fuse_embeddings(vectors[0], vectors[1], config.tri_lambda)
    scores = [cosine(e_f, v) for v in vectors[2:]]
    # ordering quantizes the similarity at 1e-12: equal-by-construction
    # scores must stay tied (and fall to the positional tie-break) when the
    # embedder output is uniformly rescaled, which perturbs raw floats
    ranked = sorted(
        zip(candidates, scores),
        key=lambda cs: (-round(cs[1], 12), cs[0].first_span.start_token, cs[0].n),
    )
    keep = max(1, math.ceil(config.keep_ratio * len(candidates)))
    return [
        Keyword(surface=c.surface, score=s, rank=i)
        for i, (c, s) in enumerate(ranked[:keep])
    ]
