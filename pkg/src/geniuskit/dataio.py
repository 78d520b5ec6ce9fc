"""File formats: JSON Lines records, CoNLL column sequences, run reports."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{line_no}: expected a JSON object")
            yield obj


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def dump_jsonl_line(row: dict) -> str:
    return json.dumps(row, ensure_ascii=False)


# --- classification records ----------------------------------------------


def load_classification_jsonl(path: str | Path) -> list["ClassificationRecord"]:
    from .augmenters import ClassificationRecord

    records = []
    for i, obj in enumerate(read_jsonl(path)):
        records.append(
            ClassificationRecord(
                text=str(obj["text"]),
                label=str(obj["label"]),
                id=str(obj.get("id", f"rec-{i:05d}")),
                provenance=tuple(obj.get("provenance", ())),
            )
        )
    return records


def classification_to_row(record) -> dict:
    row = {"text": record.text, "label": record.label, "id": record.id}
    if record.provenance:
        row["provenance"] = list(record.provenance)
    return row


# --- CoNLL column format ---------------------------------------------------


def read_conll(path: str | Path) -> list[tuple[list[str], list[str]]]:
    """Sequences of (tokens, tags); token is the first column, the tag the
    last, so 2- and 4-column files both load."""
    sequences: list[tuple[list[str], list[str]]] = []
    tokens: list[str] = []
    tags: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                if tokens:
                    sequences.append((tokens, tags))
                    tokens, tags = [], []
                continue
            cols = line.split()
            if len(cols) < 2:
                raise ValueError(f"{path}: CoNLL line needs token and tag: {line!r}")
            tokens.append(cols[0])
            tags.append(cols[-1])
    if tokens:
        sequences.append((tokens, tags))
    return sequences


def write_conll(path: str | Path, sequences: Sequence[tuple[Sequence[str], Sequence[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tokens, tags in sequences:
            for token, tag in zip(tokens, tags):
                fh.write(f"{token} {tag}\n")
            fh.write("\n")


# --- MRC records -------------------------------------------------------------


def load_mrc_jsonl(path: str | Path) -> list["MrcExample"]:
    from .augmenters import MrcExample

    return [
        MrcExample(
            paragraph=str(obj["paragraph"]),
            question=str(obj["question"]),
            answer=str(obj["answer"]),
            answer_start=int(obj["answer_start"]),
        )
        for obj in read_jsonl(path)
    ]


def mrc_to_row(example) -> dict:
    return {
        "paragraph": example.paragraph,
        "question": example.question,
        "answer": example.answer,
        "answer_start": example.answer_start,
    }


# --- run reports -------------------------------------------------------------


@dataclass
class RunReport:
    attempted: int = 0
    emitted: int = 0
    discarded: int = 0
    failed: int = 0

    def to_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "emitted": self.emitted,
            "discarded": self.discarded,
            "failed": self.failed,
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def write_json(path: str | Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
