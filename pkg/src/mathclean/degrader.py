"""Inject OCR-style formatting damage into clean records.

Each record draws from its own RNG stream seeded by ``(rng_seed, record id)``,
so output does not depend on corpus order or worker layout. Every edit is
logged in a manifest; replaying the manifest on the clean record reproduces
the damaged one.
"""

from __future__ import annotations

import json
import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .corpus import Corpus, CorpusError, Record, Source

FRACTION_FLATTEN = "fraction_flatten"
SUPERSCRIPT_DROP = "superscript_drop"
LINEBREAK_DROP = "linebreak_drop"
SYMBOL_SUBSTITUTE = "symbol_substitute"
GARBLE = "garble"
QUESTION_INFO_DROP = "question_info_drop"

# application order within one field
ERROR_CLASSES = (
    FRACTION_FLATTEN,
    SUPERSCRIPT_DROP,
    SYMBOL_SUBSTITUTE,
    LINEBREAK_DROP,
    QUESTION_INFO_DROP,
    GARBLE,
)

DEFAULT_RATE = 0.3
DEFAULT_SYMBOLS = {"×": "X", "+": "十"}
_GARBLE_PUNCT = string.punctuation


@dataclass(frozen=True)
class DegradationSpec:
    error_classes: frozenset[str]
    rates: dict[str, float] = field(default_factory=dict)
    rng_seed: int = 0
    fraction_variant: str = "random"  # "newline", "concat" or "random"
    symbols: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_SYMBOLS))
    garble_len: tuple[int, int] = (5, 20)

    def __post_init__(self) -> None:
        object.__setattr__(self, "error_classes", frozenset(self.error_classes))
        if not self.error_classes:
            raise ValueError("error_classes: at least one class must be enabled")
        unknown = self.error_classes - set(ERROR_CLASSES)
        if unknown:
            raise ValueError(f"error_classes: unknown class(es) {sorted(unknown)}")
        rates = {c: float(self.rates.get(c, DEFAULT_RATE)) for c in self.error_classes}
        for c, r in rates.items():
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"rates.{c}: probability {r} outside [0, 1]")
        object.__setattr__(self, "rates", rates)
        if self.fraction_variant not in ("newline", "concat", "random"):
            raise ValueError(f"fraction_variant: unknown variant {self.fraction_variant!r}")
        lo, hi = self.garble_len
        if not 1 <= lo <= hi:
            raise ValueError("garble_len: need 1 <= min <= max")

    @classmethod
    def from_json(cls, obj: dict) -> "DegradationSpec":
        kwargs = dict(obj)
        if "garble_len" in kwargs:
            kwargs["garble_len"] = tuple(kwargs["garble_len"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "DegradationSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {
            "error_classes": sorted(self.error_classes),
            "rates": {c: self.rates[c] for c in sorted(self.rates)},
            "rng_seed": self.rng_seed,
            "fraction_variant": self.fraction_variant,
            "symbols": self.symbols,
            "garble_len": list(self.garble_len),
        }


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    field: str
    error_class: str
    span_start: int
    span_end: int
    replacement: str

    def to_json(self) -> dict:
        return {
            "id": self.id, "field": self.field, "class": self.error_class,
            "span_start": self.span_start, "span_end": self.span_end,
            "replacement": self.replacement,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestEntry":
        return cls(obj["id"], obj["field"], obj["class"], obj["span_start"], obj["span_end"],
                   obj["replacement"])


@dataclass
class DegradationManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)

    def for_record(self, record_id: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.id == record_id]

    def degraded_ids(self) -> set[str]:
        return {e.id for e in self.entries}

    def write(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_json(), ensure_ascii=False) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "DegradationManifest":
        with Path(path).open(encoding="utf-8") as fh:
            return cls([ManifestEntry.from_json(json.loads(l)) for l in fh if l.strip()])


def apply_entries(text: str, entries: Iterable[ManifestEntry]) -> str:
    """Replay manifest edits (in order) on one field's clean text."""
    for e in entries:
        if not 0 <= e.span_start <= e.span_end <= len(text):
            raise ValueError(f"manifest span {e.span_start}:{e.span_end} outside text of length {len(text)}")
        text = text[: e.span_start] + e.replacement + text[e.span_end :]
    return text


def replay(record: Record, manifest: DegradationManifest) -> tuple[str, str]:
    entries = manifest.for_record(record.id)
    q = apply_entries(record.question, [e for e in entries if e.field == "question"])
    a = apply_entries(record.answer, [e for e in entries if e.field == "answer"])
    return q, a


# --- per-class site finders -------------------------------------------------
# Each returns a list of (start, end, replacement) in left-to-right order over
# the current text; replacements are applied with offset tracking.

_FRAC = re.compile(r"\$\\frac\{([^{}]*)\}\{([^{}]*)\}\$|\\frac\{([^{}]*)\}\{([^{}]*)\}")
_SUPER = re.compile(r"[\^_]\{([^{}]*)\}|[\^_]([0-9A-Za-z])")
_DIGITS = re.compile(r"\d+(?:\.\d+)?")

Site = tuple[int, int, str]


def _fraction_sites(text: str, rng: random.Random, spec: DegradationSpec) -> list[Site]:
    sites = []
    for m in _FRAC.finditer(text):
        num = m.group(1) if m.group(1) is not None else m.group(3)
        den = m.group(2) if m.group(2) is not None else m.group(4)
        variant = spec.fraction_variant
        if variant == "random":
            variant = "newline" if rng.random() < 0.5 else "concat"
        sep = "\n" if variant == "newline" else ""
        sites.append((m.start(), m.end(), num + sep + den))
    return sites


def _superscript_sites(text: str, rng: random.Random, spec: DegradationSpec) -> list[Site]:
    return [(m.start(), m.end(), m.group(1) if m.group(1) is not None else m.group(2))
            for m in _SUPER.finditer(text)]


def _symbol_sites(text: str, rng: random.Random, spec: DegradationSpec) -> list[Site]:
    return [(i, i + 1, spec.symbols[ch]) for i, ch in enumerate(text) if ch in spec.symbols]


def _linebreak_sites(text: str, rng: random.Random, spec: DegradationSpec) -> list[Site]:
    return [(i, i + 1, "") for i, ch in enumerate(text) if ch == "\n"]


def _info_drop_sites(text: str, rng: random.Random, spec: DegradationSpec) -> list[Site]:
    numbers = list(_DIGITS.finditer(text))
    if not numbers:
        return []
    m = rng.choice(numbers)
    return [(m.start(), m.end(), "")]


def _noise(rng: random.Random, n: int) -> str:
    out = []
    for _ in range(n):
        if rng.random() < 0.7:
            out.append(chr(rng.randint(0x4E00, 0x9FA5)))
        else:
            out.append(rng.choice(_GARBLE_PUNCT))
    return "".join(out)


def _garble_sites(text: str, rng: random.Random, spec: DegradationSpec) -> list[Site]:
    if not text:
        return []
    lo, hi = spec.garble_len
    length = min(rng.randint(lo, hi), len(text))
    start = rng.randint(0, len(text) - length)
    return [(start, start + length, _noise(rng, rng.randint(lo, hi)))]


_SITE_FINDERS: dict[str, Callable[[str, random.Random, DegradationSpec], list[Site]]] = {
    FRACTION_FLATTEN: _fraction_sites,
    SUPERSCRIPT_DROP: _superscript_sites,
    SYMBOL_SUBSTITUTE: _symbol_sites,
    LINEBREAK_DROP: _linebreak_sites,
    QUESTION_INFO_DROP: _info_drop_sites,
    GARBLE: _garble_sites,
}


def _degrade_field(record_id: str, field_name: str, text: str, spec: DegradationSpec,
                   rng: random.Random, manifest: DegradationManifest) -> str:
    for cls in ERROR_CLASSES:
        if cls not in spec.error_classes:
            continue
        if cls == QUESTION_INFO_DROP and field_name != "question":
            continue
        # draw even for zero rates so streams stay aligned across specs
        if rng.random() >= spec.rates[cls]:
            continue
        sites = _SITE_FINDERS[cls](text, rng, spec)
        if not sites:
            manifest.skipped[cls] += 1
            continue
        offset = 0
        for start, end, rep in sites:
            s, e = start + offset, end + offset
            manifest.entries.append(ManifestEntry(record_id, field_name, cls, s, e, rep))
            text = text[:s] + rep + text[e:]
            offset += len(rep) - (end - start)
    return text


def degrade_record(record: Record, spec: DegradationSpec, manifest: DegradationManifest) -> Record:
    rng = random.Random(f"{spec.rng_seed}:{record.id}")
    q = _degrade_field(record.id, "question", record.question, spec, rng, manifest)
    a = _degrade_field(record.id, "answer", record.answer, spec, rng, manifest)
    # damage must not empty a field; fall back to the clean text
    if not q.strip() or not a.strip():
        manifest.entries[:] = [e for e in manifest.entries if e.id != record.id]
        q, a = record.question, record.answer
    return Record(record.id, q, a, Source.CRAWL, dict(record.meta))


def degrade(corpus: Corpus, spec: DegradationSpec) -> tuple[Corpus, DegradationManifest]:
    """Damage a seed corpus; returns the crawl-tagged corpus and its manifest.

    Output records keep their seed ids, which is the ground-truth link used
    by recall/precision checks.
    """
    if len(corpus) and corpus.source is not Source.SEED:
        raise CorpusError(f"degrade expects a seed corpus, got {corpus.source.value}")
    manifest = DegradationManifest()
    out = [degrade_record(r, spec, manifest) for r in corpus]
    return Corpus(tuple(out), f"degraded:{corpus.provenance}"), manifest
