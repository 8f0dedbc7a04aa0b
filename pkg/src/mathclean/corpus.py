"""Record model, JSONL corpus I/O and the matching normalizer."""

from __future__ import annotations

import json
import logging
import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)


class Source(str, Enum):
    SEED = "seed"
    CRAWL = "crawl"
    CLEANED = "cleaned"


class CorpusError(ValueError):
    """Fatal validation problem in a corpus (e.g. a duplicate id)."""


@dataclass(frozen=True)
class Record:
    id: str
    question: str
    answer: str
    source: Source = Source.SEED
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("record id must be nonempty")
        if not self.question.strip():
            raise CorpusError(f"record {self.id!r}: empty question")
        if not self.answer.strip():
            raise CorpusError(f"record {self.id!r}: empty answer")

    def to_json(self) -> dict:
        obj = {"id": self.id, "question": self.question, "answer": self.answer}
        if self.meta:
            obj["meta"] = dict(self.meta)
        return obj


@dataclass(frozen=True)
class Corpus:
    records: tuple[Record, ...] = ()
    provenance: str = ""
    skipped: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        sources = set()
        for rec in self.records:
            if rec.id in seen:
                raise CorpusError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            sources.add(rec.source)
        if len(sources) > 1:
            raise CorpusError(f"mixed record sources in one corpus: {sorted(s.value for s in sources)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    @property
    def source(self) -> Source | None:
        return self.records[0].source if self.records else None

    def by_id(self) -> dict[str, Record]:
        return {r.id: r for r in self.records}


def _parse_line(line: str, source: Source) -> Record:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    for key in ("id", "question", "answer"):
        if not isinstance(obj.get(key), str):
            raise ValueError(f"missing or non-string {key!r}")
    meta = obj.get("meta") or {}
    if not isinstance(meta, dict):
        raise ValueError("meta must be an object")
    meta = {str(k): str(v) for k, v in meta.items()}
    return Record(obj["id"], obj["question"], obj["answer"], source, meta)


def ingest(path: str | Path, source: Source | str) -> Corpus:
    """Read a JSONL corpus file.

    Malformed lines are skipped, reported on stderr and counted in
    ``Corpus.skipped``. A duplicate id is fatal.
    """
    source = Source(source)
    path = Path(path)
    records: list[Record] = []
    seen: set[str] = set()
    skipped = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = _parse_line(line, source)
            except (ValueError, CorpusError) as exc:
                skipped += 1
                print(f"{path}:{lineno}: skipped malformed record ({exc})", file=sys.stderr)
                continue
            if rec.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate record id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    if skipped:
        logger.warning("%s: skipped %d malformed line(s)", path, skipped)
    return Corpus(tuple(records), str(path), skipped)


def dump_records(records: Iterable[Record]) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in records)


def write_corpus(corpus: Corpus | Iterable[Record], path: str | Path) -> None:
    Path(path).write_text(dump_records(corpus), encoding="utf-8")


def with_source(records: Iterable[Record], source: Source, provenance: str = "") -> Corpus:
    return Corpus(
        tuple(Record(r.id, r.question, r.answer, source, dict(r.meta)) for r in records),
        provenance,
    )


# --- normalization ---------------------------------------------------------

_HAN_RANGES = (
    (0x3007, 0x3007),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x2F800, 0x2FA1F),
    (0x30000, 0x323AF),
)

_LONG_LATIN_RUN = re.compile(r"[A-Za-z]{3,}")


def is_han(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _HAN_RANGES)


def _fold(ch: str) -> str:
    cp = ord(ch)
    # full-width digits and Latin letters
    if 0xFF10 <= cp <= 0xFF19 or 0xFF21 <= cp <= 0xFF3A or 0xFF41 <= cp <= 0xFF5A:
        return chr(cp - 0xFEE0)
    return ch


def _kept(ch: str) -> bool:
    return ch.isascii() and ch.isalnum() or is_han(ch)


@dataclass(frozen=True)
class NormalizedText:
    text: str
    origin_len: int

    def __len__(self) -> int:
        return len(self.text)

    def __str__(self) -> str:
        return self.text


def normalize(text: str) -> NormalizedText:
    """Keep Han, ASCII digits and ASCII letters; drop Latin runs of 3+ letters.

    Runs are measured after the character filter, so ``\\frac`` becomes
    ``frac`` and disappears while ``cm`` or ``x`` survive.
    """
    kept = "".join(c for c in map(_fold, text) if _kept(c))
    return NormalizedText(_LONG_LATIN_RUN.sub("", kept), len(text))
