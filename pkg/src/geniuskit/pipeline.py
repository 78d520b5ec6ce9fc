"""Streaming, parallel construction of sketch/text pre-training pairs.

Documents are independent, so the run is an ordered parallel map: workers
extract and render, the parent writes shards in input order.  Output bytes
are a pure function of (input, config, seed) -- worker count and
scheduling never change them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import multiprocessing
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .dataio import write_json
from .extractors import ConstantTopk, ExtractorConfig, TopkRule
from .sketcher import DEFAULT_MASK_TOKEN, DocumentSkipped, Template, build_pair_with_stats
from .textcore import tokenize

SHARD_PATTERN = "pairs-{index:05d}.jsonl"
MASKING_SAMPLE_CAP = 100_000


@dataclass(frozen=True)
class PipelineConfig:
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    template: Template = Template.T4
    mask_token: str = DEFAULT_MASK_TOKEN
    min_words: int = 50
    max_words: int = 200
    max_sentences: int | None = None  # optional paragraph filter
    workers: int = 1
    shard_size: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.min_words > self.max_words:
            raise ValueError("min_words must be <= max_words")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.shard_size < 1:
            raise ValueError("shard_size must be >= 1")

    def hash(self) -> str:
        def describe(value):
            if dataclasses.is_dataclass(value) and not isinstance(value, type):
                return {
                    f.name: describe(getattr(value, f.name))
                    for f in dataclasses.fields(value)
                }
            if isinstance(value, frozenset):
                return sorted(value)
            if isinstance(value, Template):
                return value.value
            if isinstance(value, (TopkRule, ConstantTopk)):
                return repr(value)
            return value

        blob = json.dumps(describe(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunManifest:
    input_path: str
    output_dir: str
    config_hash: str
    read: int
    emitted: int
    skipped: dict[str, int]
    wall_time_s: float
    docs_per_second: float
    workers: int
    shards: list[str]
    masking_ratio_mean: float | None
    masking_ratio_std: float | None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def check(self) -> None:
        if self.read != self.emitted + sum(self.skipped.values()):
            raise AssertionError("manifest counts do not reconcile")


_worker_config: PipelineConfig | None = None


def _init_worker(config: PipelineConfig) -> None:
    global _worker_config
    _worker_config = config


def _process_document(item: tuple[int, str]) -> tuple[str, str | None, float]:
    """(index, raw jsonl line) -> ("ok", pair line, ratio) or (reason, None, 0)."""
    index, line = item
    config = _worker_config
    try:
        obj = json.loads(line)
        text = obj["text"]
        if not isinstance(text, str):
            raise TypeError
    except (json.JSONDecodeError, KeyError, TypeError):
        return ("parse", None, 0.0)
    document = tokenize(text)
    if config.max_sentences is not None and len(document.sentences) > config.max_sentences:
        return ("sentences", None, 0.0)
    extractor = config.extractor
    if config.template is Template.T4_RANDOM:
        doc_seed = zlib.crc32(f"{config.seed}:{index}".encode()) & 0x7FFFFFFF
        extractor = dataclasses.replace(extractor, seed=doc_seed)
    try:
        pair, ratio = build_pair_with_stats(
            document,
            extractor,
            template=config.template,
            mask_token=config.mask_token,
            min_words=config.min_words,
            max_words=config.max_words,
        )
    except DocumentSkipped as skip:
        return (skip.reason, None, 0.0)
    line_out = json.dumps({"sketch": pair.sketch, "text": pair.text}, ensure_ascii=False)
    return ("ok", line_out, ratio)


def _iter_lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            yield (i, line)


class _ShardWriter:
    """Writes `pairs-NNNNN.jsonl` shards via `.tmp` files so an interrupted
    run leaves only complete shards plus clearly marked temporaries."""

    def __init__(self, out_dir: Path, shard_size: int):
        self.out_dir = out_dir
        self.shard_size = shard_size
        self.shards: list[str] = []
        self._fh = None
        self._tmp: Path | None = None
        self._count = 0

    def write(self, line: str) -> None:
        if self._fh is None or self._count >= self.shard_size:
            self._rotate()
        self._fh.write(line + "\n")
        self._count += 1

    def _rotate(self) -> None:
        self._finish_current()
        name = SHARD_PATTERN.format(index=len(self.shards))
        self._tmp = self.out_dir / (name + ".tmp")
        self._fh = open(self._tmp, "w", encoding="utf-8")
        self.shards.append(name)
        self._count = 0

    def _finish_current(self) -> None:
        if self._fh is not None:
            self._fh.close()
            final = self.out_dir / self.shards[-1]
            self._tmp.rename(final)
            self._fh = None
            self._tmp = None

    def close(self) -> None:
        self._finish_current()

    def abort(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._tmp.unlink(missing_ok=True)
            self._fh = None


def build_pretrain_dataset(
    input_jsonl: str | Path,
    output_dir: str | Path,
    config: PipelineConfig | None = None,
    overwrite: bool = False,
) -> RunManifest:
    """Build sharded sketch/text pairs from a JSONL corpus with a "text"
    field.  Unparseable lines are counted, never fatal.  Refuses to touch a
    directory holding previous output unless `overwrite` is set."""
    config = config or PipelineConfig()
    input_path = Path(input_jsonl)
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = list(out_dir.glob("pairs-*.jsonl")) + list(out_dir.glob("manifest.json"))
    if existing:
        if not overwrite:
            raise FileExistsError(
                f"{out_dir} already holds a run; pass overwrite=True (--overwrite) to replace it"
            )
        for path in existing + list(out_dir.glob("pairs-*.jsonl.tmp")):
            path.unlink()

    start = time.monotonic()
    read = emitted = 0
    skipped: dict[str, int] = {}
    ratios_sample: list[float] = []
    ratio_count = 0
    ratio_mean = 0.0
    ratio_m2 = 0.0
    writer = _ShardWriter(out_dir, config.shard_size)

    def consume(results: Iterable[tuple[str, str | None, float]]) -> None:
        nonlocal read, emitted, ratio_count, ratio_mean, ratio_m2
        for status, line, ratio in results:
            read += 1
            if status != "ok":
                skipped[status] = skipped.get(status, 0) + 1
                continue
            writer.write(line)
            emitted += 1
            ratio_count += 1
            delta = ratio - ratio_mean
            ratio_mean += delta / ratio_count
            ratio_m2 += delta * (ratio - ratio_mean)
            if len(ratios_sample) < MASKING_SAMPLE_CAP:
                ratios_sample.append(ratio)

    try:
        if config.workers == 1:
            _init_worker(config)
            consume(map(_process_document, _iter_lines(input_path)))
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(
                processes=config.workers, initializer=_init_worker, initargs=(config,)
            ) as pool:
                consume(pool.imap(_process_document, _iter_lines(input_path), chunksize=64))
        writer.close()
    except BaseException:
        writer.abort()
        raise

    wall = time.monotonic() - start
    manifest = RunManifest(
        input_path=str(input_path),
        output_dir=str(out_dir),
        config_hash=config.hash(),
        read=read,
        emitted=emitted,
        skipped=skipped,
        wall_time_s=round(wall, 3),
        docs_per_second=round(read / wall, 1) if wall > 0 else float(read),
        workers=config.workers,
        shards=writer.shards,
        masking_ratio_mean=ratio_mean if ratio_count else None,
        masking_ratio_std=math.sqrt(ratio_m2 / ratio_count) if ratio_count else None,
    )
    manifest.check()
    write_json(out_dir / "manifest.json", manifest.to_dict())
    return manifest


def sample_masking_ratios(
    manifest_dir: str | Path,
    mask_token: str = DEFAULT_MASK_TOKEN,
    limit: int = MASKING_SAMPLE_CAP,
) -> list[float]:
    """Recompute masking ratios from emitted shards (for figure rendering)."""
    from .metrics import record_masking_ratio, EvalRecord

    out: list[float] = []
    manifest_path = Path(manifest_dir) / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    for shard in manifest["shards"]:
        with open(Path(manifest_dir) / shard, encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                record = EvalRecord(original=obj["text"], sketch=obj["sketch"], generated="")
                out.append(record_masking_ratio(record, mask_token))
                if len(out) >= limit:
                    return out
    return out
