"""Rule-based cleaning baseline with an edit audit trail.

The fraction rule is deliberately unguarded: it rewrites any
``digit\\ndigit`` boundary, including the ones between two correct equation
lines. That failure mode is part of what the baseline demonstrates.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Record, Source


@dataclass(frozen=True)
class Edit:
    rule_id: str
    field: str
    start: int
    end: int
    before: str
    after: str

    def to_json(self) -> dict:
        return {"rule": self.rule_id, "field": self.field, "start": self.start,
                "end": self.end, "before": self.before, "after": self.after}


@dataclass
class ChangeSet:
    record_id: str
    edits: list[Edit] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.edits)

    def extend(self, other: "ChangeSet") -> None:
        self.edits.extend(other.edits)

    def to_json(self) -> dict:
        return {"id": self.record_id, "edits": [e.to_json() for e in self.edits]}


def replay_edits(text: str, edits: list[Edit], field_name: str | None = None) -> str:
    """Apply edits in order; each span refers to the text as left by the previous edit."""
    for e in edits:
        if field_name is not None and e.field != field_name:
            continue
        if text[e.start : e.end] != e.before:
            raise ValueError(f"edit {e.rule_id} at {e.start}:{e.end} does not match text")
        text = text[: e.start] + e.after + text[e.end :]
    return text


@dataclass(frozen=True)
class Rule:
    id: str
    pattern: str
    replacement: str
    scope: str = "both"  # "question", "answer" or "both"
    description: str = ""

    def __post_init__(self) -> None:
        if self.scope not in ("question", "answer", "both"):
            raise ValueError(f"rule {self.id}: bad scope {self.scope!r}")
        object.__setattr__(self, "_regex", re.compile(self.pattern))

    def applies_to(self, field_name: str) -> bool:
        return self.scope in ("both", field_name)

    def apply(self, text: str, field_name: str = "answer", record_id: str = "") -> tuple[str, ChangeSet]:
        changes = ChangeSet(record_id)
        pieces = []
        last = 0
        offset = 0
        for m in self._regex.finditer(text):  # type: ignore[attr-defined]
            after = m.expand(self.replacement)
            if after == m.group(0):
                continue
            start = m.start() + offset
            changes.edits.append(Edit(self.id, field_name, start, start + len(m.group(0)), m.group(0), after))
            pieces.append(text[last : m.start()])
            pieces.append(after)
            last = m.end()
            offset += len(after) - len(m.group(0))
        pieces.append(text[last:])
        return "".join(pieces), changes


@dataclass(frozen=True)
class SolutionMarker:
    marker: str
    keep: bool


# Last marker wins. "解：" stays in the output, the section headers do not.
DEFAULT_MARKERS = (
    SolutionMarker("试题解析：", keep=False),
    SolutionMarker("试题解析:", keep=False),
    SolutionMarker("[详解]", keep=False),
    SolutionMarker("【详解】", keep=False),
    SolutionMarker("解：", keep=True),
    SolutionMarker("解:", keep=True),
)

FRACTION_RULE = Rule("fix_fractions", r"(?<=\d)\n(?=\d)", "/", "both",
                     "NUM1\\nNUM2 -> NUM1/NUM2")
EQUATION_RULES = (
    Rule("fix_equations.eq", r"[，,]=", "=", "answer", "，= -> ="),
    Rule("fix_equations.approx", r"[，,]≈", "≈", "answer", "，≈ -> ≈"),
)


@dataclass
class RuleRegistry:
    markers: tuple[SolutionMarker, ...] = DEFAULT_MARKERS
    fraction_rules: tuple[Rule, ...] = (FRACTION_RULE,)
    equation_rules: tuple[Rule, ...] = EQUATION_RULES

    def __post_init__(self) -> None:
        ids = [r.id for r in (*self.fraction_rules, *self.equation_rules)]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise ValueError(f"duplicate rule id(s): {sorted(dup)}")

    @classmethod
    def load(cls, path: str | Path) -> "RuleRegistry":
        """Config keys: ``solution_markers`` ([{marker, keep}]), ``fraction_rules``
        and ``equation_rules`` ([{id, pattern, replacement, scope}]). Missing keys
        keep the defaults."""
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        kwargs = {}
        if "solution_markers" in obj:
            kwargs["markers"] = tuple(SolutionMarker(m["marker"], bool(m.get("keep", False)))
                                      for m in obj["solution_markers"])
        for key in ("fraction_rules", "equation_rules"):
            if key in obj:
                kwargs[key] = tuple(Rule(**r) for r in obj[key])
        return cls(**kwargs)


DEFAULT_REGISTRY = RuleRegistry()


def _last_marker(answer: str, markers) -> tuple[int, SolutionMarker] | None:
    best = None
    for m in markers:
        pos = answer.rfind(m.marker)
        if pos < 0:
            continue
        # prefer the later start; at equal start the longer marker
        if best is None or (pos, len(m.marker)) > (best[0], len(best[1].marker)):
            best = (pos, m)
    return best


def _extract(answer: str, registry: RuleRegistry, record_id: str = "") -> tuple[str, ChangeSet]:
    changes = ChangeSet(record_id)
    hit = _last_marker(answer, registry.markers)
    if hit is None:
        return answer, changes
    pos, m = hit
    cut = pos if m.keep else pos + len(m.marker)
    if cut == 0:
        return answer, changes
    changes.edits.append(Edit("extract_solution", "answer", 0, cut, answer[:cut], ""))
    return answer[cut:], changes


def extract_solution(answer: str, registry: RuleRegistry = DEFAULT_REGISTRY) -> str:
    return _extract(answer, registry)[0]


def _apply_rules(text: str, rules, field_name: str, record_id: str) -> tuple[str, ChangeSet]:
    changes = ChangeSet(record_id)
    for rule in rules:
        if rule.applies_to(field_name):
            text, cs = rule.apply(text, field_name, record_id)
            changes.extend(cs)
    return text, changes


def fix_fractions(text: str, registry: RuleRegistry = DEFAULT_REGISTRY,
                  field_name: str = "answer") -> tuple[str, ChangeSet]:
    return _apply_rules(text, registry.fraction_rules, field_name, "")


def fix_equations(text: str, registry: RuleRegistry = DEFAULT_REGISTRY,
                  field_name: str = "answer") -> tuple[str, ChangeSet]:
    return _apply_rules(text, registry.equation_rules, field_name, "")


def clean(record: Record, registry: RuleRegistry = DEFAULT_REGISTRY) -> tuple[Record, ChangeSet]:
    """Answer: extract solution, fix fractions, fix equations. Question: fix fractions."""
    changes = ChangeSet(record.id)
    answer, cs = _extract(record.answer, registry, record.id)
    changes.extend(cs)
    answer, cs = _apply_rules(answer, registry.fraction_rules, "answer", record.id)
    changes.extend(cs)
    answer, cs = _apply_rules(answer, registry.equation_rules, "answer", record.id)
    changes.extend(cs)
    question, cs = _apply_rules(record.question, registry.fraction_rules, "question", record.id)
    changes.extend(cs)
    if not answer.strip():
        # a marker at the very end would leave nothing; keep the original answer
        answer = record.answer
        changes.edits = [e for e in changes.edits if e.field != "answer"]
    return Record(record.id, question, answer, Source.CLEANED, dict(record.meta)), changes
