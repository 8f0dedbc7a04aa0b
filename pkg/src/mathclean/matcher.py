"""Pair crawled records with seed records.

A crawl record pairs with a seed record when their normalized questions are
identical, or when the normalized seed answer occurs inside the normalized
crawl answer as an in-order subsequence.

Candidate generation for the answer test is necessary-condition only:

* subsequence mode keys every seed answer by its globally rarest character;
  a seed is a candidate for a crawl answer only if that anchor character
  occurs in the crawl answer, and then only if every character count of the
  seed answer fits inside the crawl answer's counts;
* substring mode keys every seed answer by its rarest 4-gram, which must
  occur among the crawl answer's 4-grams.

Neither filter can reject a true match; the survivors are verified exactly.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, CorpusError, Source, normalize

logger = logging.getLogger(__name__)

GRAM = 4


class Reason(str, Enum):
    QUESTION_EXACT = "question_exact"
    ANSWER_SUBSEQUENCE = "answer_subsequence"


class Dedup(str, Enum):
    NONE = "none"
    ONE_PER_CRAWL = "one-per-crawl"
    ONE_PER_SEED = "one-per-seed"


@dataclass(frozen=True)
class MatchConfig:
    answer_match_mode: str = "subsequence"  # or "substring"
    min_answer_len: int = 8
    dedup: Dedup = Dedup.ONE_PER_CRAWL
    workers: int = 1

    def __post_init__(self) -> None:
        if self.answer_match_mode not in ("subsequence", "substring"):
            raise ValueError(f"answer_match_mode: unknown mode {self.answer_match_mode!r}")
        if self.min_answer_len < 0:
            raise ValueError("min_answer_len: must be >= 0")
        try:
            object.__setattr__(self, "dedup", Dedup(self.dedup))
        except ValueError:
            raise ValueError(f"dedup: unknown policy {self.dedup!r}") from None
        if self.workers < 1:
            raise ValueError("workers: must be >= 1")


@dataclass(frozen=True)
class MatchPair:
    seed_id: str
    crawl_id: str
    reason: Reason
    seed_norm_len: int
    crawl_norm_len: int

    def to_json(self) -> dict:
        return {"seed_id": self.seed_id, "crawl_id": self.crawl_id, "reason": self.reason.value}


@dataclass
class PairSet:
    pairs: list[MatchPair]
    seed_total: int
    crawl_total: int
    short_answer_seeds: int = 0
    config: MatchConfig = field(default_factory=MatchConfig)

    @property
    def pair_rate(self) -> float:
        return len(self.pairs) / self.seed_total if self.seed_total else 0.0

    def reason_counts(self) -> dict[str, int]:
        counts = Counter(p.reason.value for p in self.pairs)
        return {r.value: counts.get(r.value, 0) for r in Reason}

    def summary(self) -> dict:
        return {
            "pairs": len(self.pairs),
            "seed_total": self.seed_total,
            "crawl_total": self.crawl_total,
            "pair_rate": self.pair_rate,
            "reasons": self.reason_counts(),
            "short_answer_seeds_excluded": self.short_answer_seeds,
            "min_answer_len": self.config.min_answer_len,
            "answer_match_mode": self.config.answer_match_mode,
            "dedup": self.config.dedup.value,
        }


def is_subsequence(needle: str, haystack: str) -> bool:
    """True iff ``needle``'s characters appear in ``haystack`` in order."""
    needle, haystack = str(needle), str(haystack)
    if len(needle) > len(haystack):
        return False
    i = 0
    n = len(needle)
    for ch in haystack:
        if i == n:
            break
        if ch == needle[i]:
            i += 1
    return i == n


def _grams(text: str, n: int = GRAM) -> set[str]:
    return {text[i : i + n] for i in range(len(text) - n + 1)}


@dataclass
class MatchIndex:
    question_map: dict[str, list[str]]
    answer_signatures: dict[str, Counter]
    gram_index: dict[str, list[str]]
    seed_answers: dict[str, str]
    seed_questions: dict[str, str]
    short_answer_seeds: int
    mode: str
    short_keys: tuple[str, ...] = ()


def build_index(seed: Corpus, config: MatchConfig | None = None) -> MatchIndex:
    config = config or MatchConfig()
    if len(seed) and seed.source is not Source.SEED:
        raise CorpusError(f"build_index expects a seed corpus, got {seed.source.value}")
    question_map: dict[str, list[str]] = defaultdict(list)
    seed_questions: dict[str, str] = {}
    answers: dict[str, str] = {}
    short = 0
    for rec in seed:
        q = normalize(rec.question).text
        question_map[q].append(rec.id)
        seed_questions[rec.id] = q
        a = normalize(rec.answer).text
        if len(a) < config.min_answer_len:
            short += 1
            continue
        answers[rec.id] = a

    signatures = {sid: Counter(a) for sid, a in answers.items()}
    gram_index: dict[str, list[str]] = defaultdict(list)
    if config.answer_match_mode == "subsequence":
        freq: Counter = Counter()
        for a in answers.values():
            freq.update(set(a))
        for sid, a in answers.items():
            # empty needles match everything; keyed under "" and always tried
            key = min(set(a), key=lambda c: (freq[c], c)) if a else ""
            gram_index[key].append(sid)
    else:
        freq = Counter()
        for a in answers.values():
            freq.update(_grams(a))
        for sid, a in answers.items():
            grams = _grams(a)
            key = min(grams, key=lambda g: (freq[g], g)) if grams else a
            gram_index[key].append(sid)
    return MatchIndex(
        dict(question_map), signatures, dict(gram_index), answers, seed_questions, short,
        config.answer_match_mode,
        tuple(sorted(k for k in gram_index if len(k) < GRAM)) if config.answer_match_mode == "substring" else (),
    )


def _answer_candidates(index: MatchIndex, crawl_answer: str) -> Iterable[str]:
    if index.mode == "subsequence":
        keys = set(crawl_answer)
        keys.add("")
        counts = Counter(crawl_answer)
        for key in keys:
            for sid in index.gram_index.get(key, ()):
                sig = index.answer_signatures[sid]
                if all(counts[c] >= k for c, k in sig.items()):
                    yield sid
    else:
        for g in _grams(crawl_answer):
            yield from index.gram_index.get(g, ())
        # seed answers shorter than one gram are keyed by their full text
        for key in index.short_keys:
            if key in crawl_answer:
                yield from index.gram_index[key]


def _match_one(index: MatchIndex, crawl_id: str, question: str, answer: str) -> list[MatchPair]:
    q = normalize(question).text
    a = normalize(answer).text
    found: dict[str, MatchPair] = {}
    for sid in index.question_map.get(q, ()):
        found[sid] = MatchPair(sid, crawl_id, Reason.QUESTION_EXACT, len(q), len(q))
    for sid in _answer_candidates(index, a):
        if sid in found:
            continue
        needle = index.seed_answers[sid]
        ok = is_subsequence(needle, a) if index.mode == "subsequence" else needle in a
        if ok:
            found[sid] = MatchPair(sid, crawl_id, Reason.ANSWER_SUBSEQUENCE, len(needle), len(a))
    return sorted(found.values(), key=lambda p: p.seed_id)


_WORKER_INDEX: MatchIndex | None = None


def _init_worker(index: MatchIndex) -> None:
    global _WORKER_INDEX
    _WORKER_INDEX = index


def _match_chunk(chunk: Sequence[tuple[str, str, str]]) -> list[MatchPair]:
    assert _WORKER_INDEX is not None
    out: list[MatchPair] = []
    for cid, q, a in chunk:
        out.extend(_match_one(_WORKER_INDEX, cid, q, a))
    return out


def _selection_key(p: MatchPair) -> tuple:
    reason_rank = 0 if p.reason is Reason.QUESTION_EXACT else 1
    return (abs(p.seed_norm_len - p.crawl_norm_len), reason_rank, p.seed_id, p.crawl_id)


def _dedup(pairs: list[MatchPair], policy: Dedup) -> list[MatchPair]:
    if policy is Dedup.NONE:
        return pairs
    best: dict[str, MatchPair] = {}
    for p in pairs:
        cur = best.get(p.crawl_id)
        if cur is None or _selection_key(p) < _selection_key(cur):
            best[p.crawl_id] = p
    kept = list(best.values())
    if policy is Dedup.ONE_PER_SEED:
        per_seed: dict[str, MatchPair] = {}
        for p in kept:
            cur = per_seed.get(p.seed_id)
            if cur is None or _selection_key(p) < _selection_key(cur):
                per_seed[p.seed_id] = p
        kept = list(per_seed.values())
    return kept


def match_pairs(seed: Corpus, crawl: Corpus, config: MatchConfig | None = None,
                index: MatchIndex | None = None) -> PairSet:
    config = config or MatchConfig()
    if len(crawl) and crawl.source is not Source.CRAWL:
        raise CorpusError(f"match_pairs expects a crawl corpus, got {crawl.source.value}")
    if index is None:
        index = build_index(seed, config)
    rows = [(r.id, r.question, r.answer) for r in crawl]
    if config.workers > 1 and len(rows) > 1:
        size = max(1, -(-len(rows) // (config.workers * 4)))
        chunks = [rows[i : i + size] for i in range(0, len(rows), size)]
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(index,)) as pool:
            raw = [p for part in pool.map(_match_chunk, chunks) for p in part]
    else:
        raw = [p for cid, q, a in rows for p in _match_one(index, cid, q, a)]
    pairs = sorted(_dedup(raw, config.dedup), key=lambda p: (p.crawl_id, p.seed_id))
    return PairSet(pairs, len(seed), len(crawl), index.short_answer_seeds, config)


def write_pairs(pairs: PairSet | Iterable[MatchPair], path: str | Path) -> None:
    items = pairs.pairs if isinstance(pairs, PairSet) else pairs
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in items:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")


def read_pairs(path: str | Path) -> list[MatchPair]:
    """Load a pairs file; normalized lengths are not stored and read back as 0."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(MatchPair(obj["seed_id"], obj["crawl_id"], Reason(obj["reason"]), 0, 0))
    return out


def pair_rate_summary(seed_total: int, pairs: int) -> dict:
    rate = pairs / seed_total if seed_total else 0.0
    return {"seed_total": seed_total, "pairs": pairs, "pair_rate": rate,
            "pair_rate_pct": f"{rate * 100:.1f}%"}


__all__ = [
    "MatchConfig", "MatchIndex", "MatchPair", "PairSet", "Reason", "Dedup",
    "build_index", "is_subsequence", "match_pairs", "write_pairs", "read_pairs",
    "pair_rate_summary",
]
