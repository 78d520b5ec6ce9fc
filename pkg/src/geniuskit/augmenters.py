"""Task-specific augmentation pipelines: classification, NER and MRC.

Every pipeline follows the same outline -- build a target-aware sketch
from each training record, ask the generator backend to fill it in, then
validate/relabel the output for the task at hand.  Pipelines are parallel
over records but always emit outputs in input order, and account for every
generation attempt: attempted == emitted + discarded + failed.
"""

from __future__ import annotations

import re
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .backends import (
    GenerationRequest,
    GenerationResponse,
    ProtocolError,
    TransportError,
)
from .dataio import RunReport
from .extractors import Embedder, ExtractorConfig, TargetInfo, target_aware_extract, yake_extract
from .sketcher import (
    DEFAULT_MASK_TOKEN,
    Sketch,
    SketchTextPair,
    Template,
    mixup_sketch,
    project,
    render,
)
from .textcore import tokenize

NON_ENTITY_TAGS = ("O", "X")


# --- record types -------------------------------------------------------------


@dataclass(frozen=True)
class ClassificationRecord:
    text: str
    label: str
    id: str
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("classification record needs a label")


def validate_bio(tags: Sequence[str]) -> None:
    """Raise if an I- tag does not continue a same-type B-/I- tag."""
    prev = "O"
    for tag in tags:
        if tag in NON_ENTITY_TAGS:
            prev = tag
            continue
        if not re.fullmatch(r"[BI]-\S+", tag):
            raise ValueError(f"malformed BIO tag: {tag!r}")
        if tag.startswith("I-"):
            if not (prev.startswith(("B-", "I-")) and prev[2:] == tag[2:]):
                raise ValueError(f"I- tag {tag!r} does not continue an entity")
        prev = tag


@dataclass(frozen=True)
class NerSequence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    id: str

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.tags):
            raise ValueError("tokens and tags lengths differ")
        validate_bio(self.tags)


@dataclass(frozen=True)
class NerPassage:
    """Consecutive training sequences concatenated into one passage, with a
    per-token map back to (sequence id, token index)."""

    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    source_ids: tuple[str, ...]
    token_sources: tuple[tuple[str, int], ...]
    id: str

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class MrcExample:
    paragraph: str
    question: str
    answer: str
    answer_start: int

    def __post_init__(self) -> None:
        end = self.answer_start + len(self.answer)
        if self.answer_start < 0 or self.paragraph[self.answer_start : end] != self.answer:
            raise ValueError(
                f"answer offset {self.answer_start} does not match the paragraph"
            )


# --- gazetteer ----------------------------------------------------------------


def entity_spans(tokens: Sequence[str], tags: Sequence[str]) -> list[tuple[tuple[str, ...], str]]:
    """Maximal (surface tokens, type) entity spans of a BIO sequence."""
    spans = []
    start = None
    etype = None
    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.append((tuple(tokens[start:i]), etype))
            start, etype = i, tag[2:]
        elif tag.startswith("I-") and start is not None and tag[2:] == etype:
            continue
        else:
            if start is not None:
                spans.append((tuple(tokens[start:i]), etype))
            start, etype = None, None
    if start is not None:
        spans.append((tuple(tokens[start:]), etype))
    return spans


class Gazetteer:
    """Entity surface -> type mapping harvested from the training split.

    A surface seen with several types keeps its most frequent one (ties go
    to the type seen first).
    """

    def __init__(self, entries: dict[tuple[str, ...], str]):
        self.entries = dict(entries)
        self.max_len = max((len(k) for k in self.entries), default=0)

    @classmethod
    def from_sequences(cls, sequences: Sequence[NerSequence | tuple]) -> "Gazetteer":
        counts: dict[tuple[str, ...], Counter] = {}
        order: dict[tuple[str, ...], list[str]] = {}
        for seq in sequences:
            tokens, tags = (seq.tokens, seq.tags) if isinstance(seq, NerSequence) else seq
            for surface, etype in entity_spans(tokens, tags):
                counts.setdefault(surface, Counter())[etype] += 1
                order.setdefault(surface, [])
                if etype not in order[surface]:
                    order[surface].append(etype)
        entries = {}
        for surface, counter in counts.items():
            best = max(order[surface], key=lambda t: counter[t])
            entries[surface] = best
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)


def relabel(
    tokens: Sequence[str], gazetteer: Gazetteer, mode: str = "default"
) -> list[str]:
    """Longest-match, left-to-right, case-sensitive gazetteer tagging.

    Unmatched tokens become "O" in default mode or the loss-excluded
    sentinel "X" in conservative mode.
    """
    if mode not in ("default", "conservative"):
        raise ValueError(f"unknown relabel mode: {mode!r}")
    fill = "O" if mode == "default" else "X"
    tags = []
    i = 0
    n = len(tokens)
    while i < n:
        matched = False
        for length in range(min(gazetteer.max_len, n - i), 0, -1):
            etype = gazetteer.entries.get(tuple(tokens[i : i + length]))
            if etype is not None:
                tags.append(f"B-{etype}")
                tags.extend(f"I-{etype}" for _ in range(length - 1))
                i += length
                matched = True
                break
        if not matched:
            tags.append(fill)
            i += 1
    return tags


def concat_sequences(
    sequences: Sequence[NerSequence], max_words: int = 100
) -> list[NerPassage]:
    """Greedily concatenate consecutive sequences up to max_words tokens.
    A single sequence longer than the bound passes through alone."""
    passages: list[NerPassage] = []
    bucket: list[NerSequence] = []
    bucket_len = 0

    def flush() -> None:
        nonlocal bucket, bucket_len
        if not bucket:
            return
        tokens: list[str] = []
        tags: list[str] = []
        sources: list[tuple[str, int]] = []
        for seq in bucket:
            for j, (token, tag) in enumerate(zip(seq.tokens, seq.tags)):
                tokens.append(token)
                tags.append(tag)
                sources.append((seq.id, j))
        passages.append(
            NerPassage(
                tokens=tuple(tokens),
                tags=tuple(tags),
                source_ids=tuple(s.id for s in bucket),
                token_sources=tuple(sources),
                id=f"p-{len(passages):05d}",
            )
        )
        bucket, bucket_len = [], 0

    for seq in sequences:
        if bucket and bucket_len + len(seq.tokens) > max_words:
            flush()
        bucket.append(seq)
        bucket_len += len(seq.tokens)
        if bucket_len > max_words:  # oversize single sequence
            flush()
    flush()
    return passages


# --- shared pipeline plumbing ---------------------------------------------


@dataclass(frozen=True)
class DecodingOptions:
    max_new_tokens: int = 200
    num_beams: int = 4
    do_sample: bool = True
    top_k: int | None = None
    top_p: float | None = None


@dataclass(frozen=True)
class AugmentOptions:
    multiplier: int = 1
    attribute_control: bool = True
    separator: str = ":"
    mask_token: str = DEFAULT_MASK_TOKEN
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    decoding: DecodingOptions = field(default_factory=DecodingOptions)
    seed: int = 0
    workers: int = 4
    mixup_k: int | None = None
    relabel_mode: str = "default"
    concat_max_words: int = 100

    def __post_init__(self) -> None:
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        if self.mixup_k is not None and self.mixup_k < 2:
            raise ValueError("mixup_k must be >= 2")


def derive_seed(root: int, *parts) -> int:
    """Stable per-output seed so reruns regenerate identical requests."""
    key = ":".join([str(root), *map(str, parts)])
    return zlib.crc32(key.encode("utf-8")) & 0x7FFFFFFF


def strip_prompt(generated: str, prompt: str, separator: str) -> str:
    """Remove an echoed `prompt separator` prefix, tolerating whitespace."""
    pattern = rf"\s*{re.escape(prompt)}\s*{re.escape(separator)}\s*"
    m = re.match(pattern, generated)
    return generated[m.end() :] if m else generated


def _wire_prompt(label: str, separator: str) -> str:
    # The separator travels inside the prompt field; the backend joins
    # prompt and sketch with a single space.
    return f"{label}{separator}"


def _target_sketch(
    text: str,
    tri_text: str | None,
    embedder: Embedder,
    options: AugmentOptions,
) -> Sketch:
    """Target-aware T4 sketch of `text`; falls back to the general
    extractor when there is no usable target info."""
    doc = tokenize(text)
    if tri_text:
        keywords = target_aware_extract(doc, TargetInfo(tri_text), embedder, options.extractor)
    else:
        keywords = yake_extract(doc, options.extractor)
    return render(project(doc, keywords), Template.T4, options.mask_token)


def _generate_one(
    generator,
    sketch_text: str,
    prompt: str | None,
    options: AugmentOptions,
    seed: int,
) -> str:
    request = GenerationRequest(
        sketch_text=sketch_text,
        prompt=prompt,
        n=1,
        max_new_tokens=options.decoding.max_new_tokens,
        num_beams=options.decoding.num_beams,
        do_sample=options.decoding.do_sample,
        top_k=options.decoding.top_k,
        top_p=options.decoding.top_p,
        seed=seed,
    )
    response: GenerationResponse = generator.generate(request)
    return response.texts[0]


def _parallel_over(items: Sequence, fn, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- classification ---------------------------------------------------------


def classification_sketch(
    record: ClassificationRecord, embedder: Embedder, options: AugmentOptions
) -> Sketch:
    return _target_sketch(record.text, record.label, embedder, options)


def _mixup_group(
    record: ClassificationRecord,
    by_label: dict[str, list[ClassificationRecord]],
    k: int,
) -> list[ClassificationRecord]:
    group = by_label[record.label]
    if len(group) < 2:
        return [record]
    pos = group.index(record)
    return [group[(pos + offset) % len(group)] for offset in range(k)]


def augment_classification(
    records: Sequence[ClassificationRecord],
    generator,
    embedder: Embedder,
    options: AugmentOptions,
) -> tuple[list[ClassificationRecord], RunReport]:
    """Generate `multiplier` new records per input, keeping its label.

    With `mixup_k` set, each sketch interleaves the kept fragments of k
    same-label records (the record itself plus its next same-label
    neighbours); records whose label group is a singleton fall back to the
    single-record sketch.
    """
    report = RunReport()
    by_label: dict[str, list[ClassificationRecord]] = {}
    for rec in records:
        by_label.setdefault(rec.label, []).append(rec)

    def run(record: ClassificationRecord):
        outputs = []
        emitted = discarded = failed = 0
        if options.mixup_k:
            group = _mixup_group(record, by_label, options.mixup_k)
            projections = []
            for rec in group:
                doc = tokenize(rec.text)
                keywords = target_aware_extract(
                    doc, TargetInfo(rec.label), embedder, options.extractor
                )
                projections.append(project(doc, keywords))
            usable = [p for p in projections if p.kept_spans]
            if len(usable) >= 2:
                sketch = mixup_sketch(
                    projections,
                    mask_token=options.mask_token,
                    source_ids=[rec.id for rec in group],
                )
            else:
                sketch = classification_sketch(record, embedder, options)
                group = [record]
            provenance = tuple(rec.id for rec in group)
        else:
            sketch = classification_sketch(record, embedder, options)
            provenance = (record.id,)
        prompt = _wire_prompt(record.label, options.separator) if options.attribute_control else None
        for j in range(options.multiplier):
            seed = derive_seed(options.seed, record.id, j)
            try:
                raw = _generate_one(generator, sketch.text, prompt, options, seed)
            except (TransportError, ProtocolError):
                failed += 1
                continue
            text = strip_prompt(raw, record.label, options.separator)
            outputs.append(
                ClassificationRecord(
                    text=text,
                    label=record.label,
                    id=f"{record.id}-aug-{j}",
                    provenance=provenance,
                )
            )
            emitted += 1
        return outputs, emitted, discarded, failed

    results = _parallel_over(list(records), run, options.workers)
    all_outputs: list[ClassificationRecord] = []
    for outputs, emitted, discarded, failed in results:
        all_outputs.extend(outputs)
        report.attempted += options.multiplier
        report.emitted += emitted
        report.discarded += discarded
        report.failed += failed
    return all_outputs, report


# --- NER ---------------------------------------------------------------------


def passage_tri(passage: NerPassage) -> str | None:
    """Space-joined unique entity surfaces, in order of appearance."""
    seen: list[str] = []
    for surface, _ in entity_spans(passage.tokens, passage.tags):
        text = " ".join(surface)
        if text not in seen:
            seen.append(text)
    return " ".join(seen) if seen else None


def augment_ner(
    passages: Sequence[NerPassage],
    gazetteer: Gazetteer,
    generator,
    embedder: Embedder,
    options: AugmentOptions,
) -> tuple[list[NerSequence], RunReport]:
    """Sketch each passage around its entities, generate, then relabel the
    output with the training gazetteer.  Outputs without a single
    gazetteer match are uninformative and dropped (counted as discarded).
    """
    report = RunReport()

    def run(passage: NerPassage):
        outputs = []
        emitted = discarded = failed = 0
        sketch = _target_sketch(passage.text, passage_tri(passage), embedder, options)
        for j in range(options.multiplier):
            seed = derive_seed(options.seed, passage.id, j)
            try:
                raw = _generate_one(generator, sketch.text, None, options, seed)
            except (TransportError, ProtocolError):
                failed += 1
                continue
            tokens = tuple(t.surface for t in tokenize(raw).tokens)
            tags = tuple(relabel(tokens, gazetteer, options.relabel_mode))
            if not any(tag.startswith("B-") for tag in tags):
                discarded += 1
                continue
            outputs.append(NerSequence(tokens=tokens, tags=tags, id=f"{passage.id}-aug-{j}"))
            emitted += 1
        return outputs, emitted, discarded, failed

    results = _parallel_over(list(passages), run, options.workers)
    all_outputs: list[NerSequence] = []
    for outputs, emitted, discarded, failed in results:
        all_outputs.extend(outputs)
        report.attempted += options.multiplier
        report.emitted += emitted
        report.discarded += discarded
        report.failed += failed
    return all_outputs, report


# --- MRC ----------------------------------------------------------------------


def _answer_chunk(paragraph: str, answer_start: int, answer_end: int) -> tuple[int, int]:
    """Character range of the sentence(s) containing the answer."""
    doc = tokenize(paragraph)
    ranges = []
    for sent in doc.sentences:
        first = doc.tokens[sent.start_token]
        last = doc.tokens[sent.end_token - 1]
        ranges.append((first.char_start, last.char_end))
    start_idx = 0
    for i, (s, e) in enumerate(ranges):
        if e > answer_start:
            start_idx = i
            break
    end_idx = start_idx
    while ranges[end_idx][1] < answer_end and end_idx + 1 < len(ranges):
        end_idx += 1
    return ranges[start_idx][0], ranges[end_idx][1]


def mrc_sketch(example: MrcExample, embedder: Embedder, options: AugmentOptions) -> tuple[str, str, int]:
    """Sketch = sketched preceding text + verbatim answer sentence +
    sketched following text.  Returns (sketch text, answer chunk text,
    answer offset within the chunk)."""
    answer_end = example.answer_start + len(example.answer)
    chunk_start, chunk_end = _answer_chunk(example.paragraph, example.answer_start, answer_end)
    chunk = example.paragraph[chunk_start:chunk_end]
    parts = []
    pre = example.paragraph[:chunk_start]
    post = example.paragraph[chunk_end:]
    if tokenize(pre).length_words:
        parts.append(_target_sketch(pre, example.question, embedder, options).text)
    parts.append(chunk)
    if tokenize(post).length_words:
        parts.append(_target_sketch(post, example.question, embedder, options).text)
    return " ".join(parts), chunk, example.answer_start - chunk_start


def _relocate_answer(generated: str, answer: str, chunk: str, offset_in_chunk: int) -> int | None:
    """Prefer the answer inside the verbatim copy of the answer sentence;
    fall back to its first occurrence anywhere."""
    chunk_pos = generated.find(chunk)
    if chunk_pos != -1:
        start = chunk_pos + offset_in_chunk
        if generated[start : start + len(answer)] == answer:
            return start
    pos = generated.find(answer)
    return pos if pos != -1 else None


def augment_mrc(
    examples: Sequence[MrcExample],
    generator,
    embedder: Embedder,
    options: AugmentOptions,
) -> tuple[list[MrcExample], RunReport]:
    """Regenerate the context around the (unchanged) answer sentence.

    Every emitted example is offset-checked; generations that lose the
    answer are discarded and counted.  An external quality filter over a
    baseline model can be layered on top via the returned records.
    """
    report = RunReport()

    def run(item: tuple[int, MrcExample]):
        idx, example = item
        outputs = []
        emitted = discarded = failed = 0
        sketch_text, chunk, offset_in_chunk = mrc_sketch(example, embedder, options)
        for j in range(options.multiplier):
            seed = derive_seed(options.seed, idx, j)
            try:
                generated = _generate_one(generator, sketch_text, None, options, seed)
            except (TransportError, ProtocolError):
                failed += 1
                continue
            start = _relocate_answer(generated, example.answer, chunk, offset_in_chunk)
            if start is None:
                discarded += 1
                continue
            outputs.append(
                MrcExample(
                    paragraph=generated,
                    question=example.question,
                    answer=example.answer,
                    answer_start=start,
                )
            )
            emitted += 1
        return outputs, emitted, discarded, failed

    results = _parallel_over(list(enumerate(examples)), run, options.workers)
    all_outputs: list[MrcExample] = []
    for outputs, emitted, discarded, failed in results:
        all_outputs.extend(outputs)
        report.attempted += options.multiplier
        report.emitted += emitted
        report.discarded += discarded
        report.failed += failed
    return all_outputs, report


# --- fine-tuning pairs -------------------------------------------------------


def build_finetune_pairs(
    records: Sequence[ClassificationRecord],
    embedder: Embedder,
    options: AugmentOptions,
) -> list[SketchTextPair]:
    """Target-aware sketch -> original text pairs for generator fine-tuning."""
    pairs = []
    for record in records:
        if not record.text.strip():
            continue
        sketch = classification_sketch(record, embedder, options)
        sketch_text = sketch.text
        if options.attribute_control:
            sketch_text = f"{_wire_prompt(record.label, options.separator)} {sketch_text}"
        pairs.append(SketchTextPair(sketch=sketch_text, text=record.text))
    return pairs
