"""Build training examples for the format-conversion model and parse its output."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from . import prompts
from .corpus import Corpus, CorpusError, Record
from .degrader import GARBLE, DegradationManifest, DegradationSpec, degrade_record
from .matcher import MatchPair, PairSet


class Label(str, Enum):
    NORMAL = "normal"
    SYNTAX_ERROR = "syntax_error"
    NOT_CHINESE_MATH = "not_chinese_math"


class Status(str, Enum):
    OK = "ok"
    SYNTAX_ERROR = "syntax_error"
    NOT_CHINESE_MATH = "not_chinese_math"
    MALFORMED = "malformed"


SENTINELS = {
    prompts.SYNTAX_ERROR: (Label.SYNTAX_ERROR, Status.SYNTAX_ERROR),
    prompts.NOT_CHINESE_MATH: (Label.NOT_CHINESE_MATH, Status.NOT_CHINESE_MATH),
}


@dataclass(frozen=True)
class PromptExample:
    kind: str  # "train" or "infer"
    prompt: str
    crawl_id: str
    target: str | None = None
    label: Label = Label.NORMAL
    seed_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("train", "infer"):
            raise ValueError(f"kind: {self.kind!r}")
        if self.kind == "train" and self.target is None:
            raise ValueError("train examples need a target")
        if self.label is Label.SYNTAX_ERROR and self.target != prompts.SYNTAX_ERROR:
            raise ValueError("syntax_error examples must target the syntax-error sentinel")
        if self.label is Label.NOT_CHINESE_MATH and self.target != prompts.NOT_CHINESE_MATH:
            raise ValueError("not_chinese_math examples must target the not-math sentinel")

    def to_json(self, layout: str = "flat") -> dict:
        if layout == "chat":
            return {"messages": [{"role": "user", "content": self.prompt},
                                 {"role": "assistant", "content": self.target}]}
        return {"prompt": self.prompt, "target": self.target, "label": self.label.value,
                "seed_id": self.seed_id, "crawl_id": self.crawl_id}


@dataclass(frozen=True)
class RewriteOutput:
    crawl_id: str
    raw: str
    status: Status
    parsed: tuple[str, str] | None = None

    def to_json(self) -> dict:
        return {"crawl_id": self.crawl_id, "raw": self.raw, "status": self.status.value,
                "question": self.parsed[0] if self.parsed else None,
                "answer": self.parsed[1] if self.parsed else None}


def render_prompt(crawl: Record, mode: str = "sft") -> str:
    q, a = crawl.question, crawl.answer
    if mode == "sft":
        parts = [*prompts.INSTRUCTION_LINES,
                 prompts.INPUT_QUESTION_MARKER, q, prompts.INPUT_ANSWER_MARKER, a]
    elif mode == "one_shot":
        parts = [
            *prompts.INSTRUCTION_LINES,
            prompts.DEMO_HEADER, prompts.DEMO_INPUT,
            prompts.INPUT_QUESTION_MARKER, prompts.DEMO_QUESTION,
            prompts.INPUT_ANSWER_MARKER, prompts.DEMO_ANSWER,
            prompts.DEMO_OUTPUT,
            prompts.OUTPUT_QUESTION_MARKER, prompts.DEMO_CLEAN_QUESTION,
            prompts.OUTPUT_ANSWER_MARKER, prompts.DEMO_CLEAN_ANSWER,
            prompts.ONE_SHOT_FOLLOWUP,
            prompts.INPUT_QUESTION_MARKER, q, prompts.INPUT_ANSWER_MARKER, a,
        ]
    else:
        raise ValueError(f"unknown prompt mode {mode!r}")
    return "\n".join(parts)


def render_target(seed: Record) -> str:
    return (f"{prompts.OUTPUT_QUESTION_MARKER}\n{seed.question}\n"
            f"{prompts.OUTPUT_ANSWER_MARKER}\n{seed.answer}")


def extract_output(raw: str, crawl_id: str = "") -> RewriteOutput:
    """Classify a model response; only ``[问题]...[答案]...`` with both parts nonempty is ok."""
    stripped = raw.strip()
    if stripped in SENTINELS:
        return RewriteOutput(crawl_id, raw, SENTINELS[stripped][1])
    qm, am = prompts.OUTPUT_QUESTION_MARKER, prompts.OUTPUT_ANSWER_MARKER
    if raw.count(qm) != 1 or raw.count(am) != 1:
        return RewriteOutput(crawl_id, raw, Status.MALFORMED)
    q_at, a_at = raw.index(qm), raw.index(am)
    if a_at < q_at:
        return RewriteOutput(crawl_id, raw, Status.MALFORMED)
    question = raw[q_at + len(qm) : a_at].strip()
    answer = raw[a_at + len(am) :].strip()
    if not question or not answer:
        return RewriteOutput(crawl_id, raw, Status.MALFORMED)
    return RewriteOutput(crawl_id, raw, Status.OK, (question, answer))


@dataclass(frozen=True)
class AugmentationConfig:
    count: int | None = None  # None -> ratio * number of pairs
    ratio: float = 0.02
    rng_seed: int = 0
    rounds: int = 3  # garble passes per synthetic example

    def resolve_count(self, n_pairs: int) -> int:
        if self.count is not None:
            if self.count < 0:
                raise ValueError("augmentation.count: must be >= 0")
            return self.count
        return round(self.ratio * n_pairs)


def _garbled(record: Record, seed: int, rounds: int) -> Record:
    for r in range(rounds):
        spec = DegradationSpec(frozenset({GARBLE}), {GARBLE: 1.0}, rng_seed=seed * 1000 + r)
        record = degrade_record(record, spec, DegradationManifest())
    return record


def build_training_set(pairs: PairSet | Sequence[MatchPair], seed: Corpus, crawl: Corpus,
                       aug: AugmentationConfig | None = None) -> list[PromptExample]:
    aug = aug or AugmentationConfig()
    items = pairs.pairs if isinstance(pairs, PairSet) else list(pairs)
    seeds, crawls = seed.by_id(), crawl.by_id()
    examples = []
    for p in sorted(items, key=lambda p: (p.crawl_id, p.seed_id)):
        if p.seed_id not in seeds:
            raise CorpusError(f"pair references unknown seed id {p.seed_id!r}")
        if p.crawl_id not in crawls:
            raise CorpusError(f"pair references unknown crawl id {p.crawl_id!r}")
        examples.append(PromptExample("train", render_prompt(crawls[p.crawl_id]), p.crawl_id,
                                      render_target(seeds[p.seed_id]), Label.NORMAL, p.seed_id))
    n_aug = aug.resolve_count(len(items))
    rng = random.Random(aug.rng_seed)
    pool = list(crawl.records)
    if n_aug and not pool:
        raise CorpusError("augmentation requested but the crawl corpus is empty")
    for i in range(n_aug):
        src = pool[rng.randrange(len(pool))]
        bad = _garbled(src, aug.rng_seed + i, aug.rounds)
        examples.append(PromptExample("train", render_prompt(bad), f"{src.id}#aug{i}",
                                      prompts.SYNTAX_ERROR, Label.SYNTAX_ERROR, None))
    random.Random(aug.rng_seed).shuffle(examples)
    return examples


def write_training_set(examples: Iterable[PromptExample], path: str | Path,
                       layout: str = "flat") -> None:
    if layout not in ("flat", "chat"):
        raise ValueError(f"layout: unknown layout {layout!r}")
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(layout), ensure_ascii=False) + "\n")
