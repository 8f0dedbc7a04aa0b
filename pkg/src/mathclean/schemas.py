"""JSON schemas for every artifact the CLI writes, plus small validators."""

from __future__ import annotations

import json
from pathlib import Path

from jsonschema import Draft202012Validator

_STR = {"type": "string"}
_NESTR = {"type": "string", "minLength": 1}
_COUNT = {"type": "integer", "minimum": 0}

RECORD = {
    "type": "object",
    "required": ["id", "question", "answer"],
    "properties": {"id": _NESTR, "question": _NESTR, "answer": _NESTR, "meta": {"type": "object"}},
    "additionalProperties": False,
}

CLEANED_RECORD = {**RECORD, "properties": {**RECORD["properties"],
                                           "id": {"type": "string", "pattern": "^cleaned:.+"}}}

PAIR = {
    "type": "object",
    "required": ["seed_id", "crawl_id", "reason"],
    "properties": {"seed_id": _NESTR, "crawl_id": _NESTR,
                   "reason": {"enum": ["question_exact", "answer_subsequence"]}},
    "additionalProperties": False,
}

MANIFEST_ENTRY = {
    "type": "object",
    "required": ["id", "field", "class", "span_start", "span_end", "replacement"],
    "properties": {"id": _NESTR, "field": {"enum": ["question", "answer"]}, "class": _NESTR,
                   "span_start": _COUNT, "span_end": _COUNT, "replacement": _STR},
    "additionalProperties": False,
}

TRAIN_FLAT = {
    "type": "object",
    "required": ["prompt", "target", "label", "seed_id", "crawl_id"],
    "properties": {"prompt": _NESTR, "target": _NESTR,
                   "label": {"enum": ["normal", "syntax_error", "not_chinese_math"]},
                   "seed_id": {"type": ["string", "null"]}, "crawl_id": _NESTR},
    "additionalProperties": False,
}

TRAIN_CHAT = {
    "type": "object",
    "required": ["messages"],
    "properties": {"messages": {
        "type": "array", "minItems": 2, "maxItems": 2,
        "items": {"type": "object", "required": ["role", "content"],
                  "properties": {"role": {"enum": ["user", "assistant"]}, "content": _NESTR}},
    }},
    "additionalProperties": False,
}

CHECKPOINT_LINE = {
    "type": "object",
    "required": ["crawl_id", "raw"],
    "properties": {"crawl_id": _NESTR, "raw": _STR},
    "additionalProperties": False,
}

REWRITE_OUTPUT = {
    "type": "object",
    "required": ["crawl_id", "raw", "status", "question", "answer"],
    "properties": {"crawl_id": _NESTR, "raw": _STR,
                   "status": {"enum": ["ok", "syntax_error", "not_chinese_math", "malformed"]},
                   "question": {"type": ["string", "null"]}, "answer": {"type": ["string", "null"]}},
}

VERDICT = {
    "type": "object",
    "required": ["id", "decision", "reason"],
    "properties": {"id": _NESTR, "decision": {"enum": ["correct", "incorrect", "unparseable"]},
                   "reason": _NESTR},
}

MATCH_REPORT = {
    "type": "object",
    "required": ["seed_total", "crawl_total", "pairs", "pair_rate", "pair_rate_pct", "reasons",
                 "short_answer_seeds_excluded", "min_answer_len", "answer_match_mode", "dedup"],
    "properties": {"seed_total": _COUNT, "crawl_total": _COUNT, "pairs": _COUNT,
                   "pair_rate": {"type": "number", "minimum": 0},
                   "pair_rate_pct": {"type": "string", "pattern": r"^\d+\.\d%$"},
                   "reasons": {"type": "object", "additionalProperties": _COUNT},
                   "short_answer_seeds_excluded": _COUNT, "min_answer_len": _COUNT,
                   "answer_match_mode": {"enum": ["subsequence", "substring"]},
                   "dedup": {"enum": ["none", "one-per-crawl", "one-per-seed"]}},
}

EVAL_REPORT = {
    "type": "object",
    "required": ["accuracy", "n", "per_grade", "verdicts_path"],
    "properties": {"accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                   "n": _COUNT, "per_grade": {"type": "object"},
                   "verdicts_path": {"type": ["string", "null"]}},
}

RUN_REPORT = {
    "type": "object",
    "required": ["stages", "pair_rate", "timings", "config_fingerprint", "created_at"],
    "properties": {
        "stages": {"type": "object", "additionalProperties": {"type": "object"}},
        "pair_rate": {"type": ["object", "null"]},
        "timings": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "config_fingerprint": {"type": "string"},
        "created_at": {"type": "string"},
        "notes": {"type": "array", "items": _STR},
    },
}

JSONL_SCHEMAS = {
    "corpus": RECORD,
    "cleaned": CLEANED_RECORD,
    "pairs": PAIR,
    "manifest": MANIFEST_ENTRY,
    "train": TRAIN_FLAT,
    "train_chat": TRAIN_CHAT,
    "checkpoint": CHECKPOINT_LINE,
    "rewrite_outputs": REWRITE_OUTPUT,
    "verdicts": VERDICT,
}
JSON_SCHEMAS = {"match_report": MATCH_REPORT, "eval_report": EVAL_REPORT, "report": RUN_REPORT}


def validate_jsonl(path: str | Path, kind: str) -> list[str]:
    """Return ``line N: message`` strings for every invalid line (empty if all valid)."""
    validator = Draft202012Validator(JSONL_SCHEMAS[kind])
    errors = []
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"line {n}: {exc}")
                continue
            errors.extend(f"line {n}: {e.message}" for e in validator.iter_errors(obj))
    return errors


def validate_json(path: str | Path, kind: str) -> list[str]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return [e.message for e in Draft202012Validator(JSON_SCHEMAS[kind]).iter_errors(obj)]
