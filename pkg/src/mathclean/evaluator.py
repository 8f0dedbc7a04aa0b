"""Final-answer extraction and equivalence grading for Chinese math responses.

Numbers are parsed into exact ``Fraction`` values. Tolerance only comes into
play when a decimal answer stands for a non-terminating rational
(``0.33`` for ``1/3``).
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .corpus import Corpus

ANSWER_MARKERS = ("故答案为：", "故答案为:", "故答案为", "答案为：", "答案为:", "答案为", "答案是",
                  "答：", "答:")

# longest first so 千克 wins over 克, 分钟 over 分
UNITS = sorted({
    "只", "个", "人", "名", "本", "棵", "条", "块", "辆", "次", "岁", "页", "张", "支", "台", "件", "箱",
    "袋", "盒", "朵", "头", "匹", "场", "道", "间", "段", "根", "瓶", "杯", "碗", "份", "组", "套", "双",
    "千克", "克", "吨", "斤", "公斤", "两",
    "米", "千米", "公里", "厘米", "分米", "毫米",
    "平方米", "平方厘米", "平方分米", "平方千米", "公顷", "亩",
    "立方米", "立方厘米", "立方分米", "升", "毫升",
    "元", "角", "分", "小时", "分钟", "秒", "天", "周", "年", "月", "日", "倍", "度",
    "cm", "mm", "dm", "km", "m", "kg", "g", "t", "ml", "L", "h", "min", "s",
}, key=len, reverse=True)

_ASCII_UNITS = [u for u in UNITS if u.isascii()]

_NUM = r"\d+(?:\.\d+)?"
_TOKEN = re.compile(
    rf"(?P<mixed>(?P<mw>\d+)\s*(?:又\s*(?P<mn1>\d+)\s*/\s*(?P<md1>\d+)|\$?\\[dt]?frac\{{(?P<mn2>\d+)\}}\{{(?P<md2>\d+)\}}\$?))"
    rf"|(?P<latex>\$?\\[dt]?frac\{{(?P<fn>{_NUM})\}}\{{(?P<fd>{_NUM})\}}\$?)"
    rf"|(?P<slash>(?P<sn>{_NUM})\s*/\s*(?P<sd>{_NUM}))"
    rf"|(?P<pct>(?P<pv>{_NUM})\s*%)"
    rf"|(?P<num>\d{{1,3}}(?:,\d{{3}})+(?:\.\d+)?|{_NUM})"
)
_SIGN_OK_BEFORE = re.compile(r"[0-9A-Za-z)\]]")
_TRAILING = "。．.，,；;！!、?？ \t\n"
_EXPR_CHARS = set("0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz+-*/^().")


def _fold_width(text: str) -> str:
    return "".join(chr(ord(c) - 0xFEE0) if 0xFF01 <= ord(c) <= 0xFF5E else c for c in text)


@dataclass(frozen=True)
class ExtractedAnswer:
    raw_span: str
    value: Fraction | None = None
    unit: str | None = None
    form: str = "symbolic"  # integer, decimal, fraction, percent, mixed_number, symbolic
    decimals: int = 0  # places after the point when written as a plain decimal (percents add 2)

    def __post_init__(self) -> None:
        if self.form != "symbolic" and self.value is None:
            raise ValueError("numeric forms need a value")


def _answer_segment(text: str) -> tuple[str, bool]:
    best = None
    for m in ANSWER_MARKERS:
        pos = text.rfind(m)
        if pos >= 0 and (best is None or pos + len(m) > best):
            best = pos + len(m)
    if best is None:
        return text, False
    return text[best:].split("\n", 1)[0], True


def _unit_after(text: str, pos: int) -> str | None:
    rest = text[pos:].lstrip()
    if rest[:1] in ("(", "（"):
        rest = rest[1:].lstrip()
    for u in UNITS:
        if rest.startswith(u):
            nxt = rest[len(u) : len(u) + 1]
            if u.isascii() and nxt.isascii() and nxt.isalpha():
                continue
            return u
    return None


def _expression_span(text: str, start: int, end: int) -> str:
    while start > 0 and text[start - 1] in _EXPR_CHARS:
        start -= 1
    while end < len(text) and text[end] in _EXPR_CHARS:
        end += 1
    return text[start:end]


def _strip_trailing(s: str) -> str:
    return s.strip().rstrip(_TRAILING).strip()


def _is_symbolic(text: str, m: re.Match) -> bool:
    """A number touching variables (``2n+1``) belongs to an expression, not a value."""
    end = m.end()
    after = text[end:]
    rest = after.lstrip()
    for u in _ASCII_UNITS:
        nxt = rest[len(u) : len(u) + 1]
        if rest.startswith(u) and not (nxt.isascii() and nxt.isalpha()):
            end += len(after) - len(rest) + len(u)
            break
    left, right = m.start(), end
    while left > 0 and text[left - 1] in _EXPR_CHARS:
        left -= 1
    while right < len(text) and text[right] in _EXPR_CHARS:
        right += 1
    return bool(re.search(r"[A-Za-z]", text[left : m.start()] + text[end:right]))


def extract_answer(response: str) -> ExtractedAnswer:
    """Pull the final answer out of a worked solution. Never raises."""
    text = _fold_width(response or "")
    segment, _ = _answer_segment(text)
    matches = list(_TOKEN.finditer(segment))
    if not matches:
        raw = _strip_trailing(segment)
        if not raw:
            lines = [l for l in text.splitlines() if l.strip()]
            raw = _strip_trailing(lines[-1]) if lines else ""
        return ExtractedAnswer(raw)
    m = matches[-1]
    if _is_symbolic(segment, m):
        return ExtractedAnswer(_strip_trailing(_expression_span(segment, m.start(), m.end())))
    negative = m.start() > 0 and segment[m.start() - 1] == "-" and (
        m.start() == 1 or not _SIGN_OK_BEFORE.match(segment[m.start() - 2]))
    sign = -1 if negative else 1
    unit = _unit_after(segment, m.end())
    raw = ("-" if negative else "") + m.group(0).strip()
    decimals = 0
    if m.group("mixed"):
        n = m.group("mn1") or m.group("mn2")
        d = m.group("md1") or m.group("md2")
        if int(d) == 0:
            return ExtractedAnswer(raw)
        value, form = Fraction(int(m.group("mw"))) + Fraction(int(n), int(d)), "mixed_number"
    elif m.group("latex") or m.group("slash"):
        n, d = (m.group("fn"), m.group("fd")) if m.group("latex") else (m.group("sn"), m.group("sd"))
        if Fraction(d) == 0:
            return ExtractedAnswer(raw)
        value, form = Fraction(n) / Fraction(d), "fraction"
    elif m.group("pct"):
        pv = m.group("pv")
        value, form = Fraction(pv) / 100, "percent"
        decimals = (len(pv.split(".")[1]) if "." in pv else 0) + 2
    else:
        digits = m.group("num").replace(",", "")
        value = Fraction(digits)
        form = "decimal" if "." in digits else "integer"
        decimals = len(digits.split(".")[1]) if "." in digits else 0
    return ExtractedAnswer(raw, sign * value, unit, form, decimals)


def _terminates(q: Fraction) -> bool:
    d = q.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def _round_half_up(q: Fraction, places: int) -> Fraction:
    scale = 10 ** places
    n = q * scale
    sign = -1 if n < 0 else 1
    return sign * Fraction(int(abs(n) + Fraction(1, 2)), scale)


def _trunc(q: Fraction, places: int) -> Fraction:
    scale = 10 ** places
    n = q * scale
    sign = -1 if n < 0 else 1
    return sign * Fraction(int(abs(n)), scale)


def normalize_symbolic(s: str) -> str:
    s = _fold_width(s)
    s = re.sub(r"\s+|\$", "", s)
    s = s.rstrip(_TRAILING)
    while len(s) >= 2 and s[0] in "([" and s[-1] in ")]" and _balanced(s[1:-1]):
        s = s[1:-1]
    return s


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def _approximates(dec: ExtractedAnswer, other: ExtractedAnswer, tol: float) -> bool:
    if dec.form not in ("decimal", "percent") or dec.decimals < 2 or _terminates(other.value):
        return False
    v = other.value
    if dec.value in (_round_half_up(v, dec.decimals), _trunc(v, dec.decimals)):
        return True
    scale = max(abs(v), abs(dec.value))
    return scale > 0 and abs(v - dec.value) <= Fraction(tol) * scale


def compare(pred: ExtractedAnswer, gold: ExtractedAnswer, tol: float = 1e-6) -> tuple[bool, str]:
    if pred.value is not None and gold.value is not None:
        if pred.unit and gold.unit and pred.unit != gold.unit:
            return False, "unit_conflict"
        if pred.value == gold.value:
            return True, "numeric_equal"
        if _approximates(pred, gold, tol) or _approximates(gold, pred, tol):
            return True, "rounded_equal"
        return False, "value_mismatch"
    if pred.value is None and gold.value is None:
        if normalize_symbolic(pred.raw_span) == normalize_symbolic(gold.raw_span):
            return True, "symbolic_equal"
        return False, "symbolic_mismatch"
    return False, "form_mismatch"


def equivalent(pred: ExtractedAnswer, gold: ExtractedAnswer, tol: float = 1e-6) -> bool:
    return compare(pred, gold, tol)[0]


@dataclass(frozen=True)
class Verdict:
    id: str
    decision: str  # correct, incorrect, unparseable
    reason: str
    predicted: str | None = None
    gold: str | None = None
    grade: str | None = None

    def to_json(self) -> dict:
        return {"id": self.id, "decision": self.decision, "reason": self.reason,
                "predicted": self.predicted, "gold": self.gold, "grade": self.grade}


def _fmt(a: ExtractedAnswer) -> str:
    if a.value is None:
        return a.raw_span
    v = str(a.value)
    return f"{v} {a.unit}" if a.unit else v


def grade_item(item_id: str, response: str, gold_text: str | None, grade: str | None = None,
               tol: float = 1e-6) -> Verdict:
    if gold_text is None:
        return Verdict(item_id, "unparseable", "missing_gold", grade=grade)
    pred, gold = extract_answer(response), extract_answer(gold_text)
    if pred.value is None and (gold.value is not None or not pred.raw_span):
        return Verdict(item_id, "unparseable", "no_answer", pred.raw_span or None, _fmt(gold), grade)
    ok, reason = compare(pred, gold, tol)
    return Verdict(item_id, "correct" if ok else "incorrect", reason, _fmt(pred), _fmt(gold), grade)


@dataclass
class GradeReport:
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.verdicts)

    @property
    def correct(self) -> int:
        return sum(v.decision == "correct" for v in self.verdicts)

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.n if self.n else None

    def per_grade(self) -> dict[str, dict]:
        groups: dict[str, list[Verdict]] = defaultdict(list)
        for v in self.verdicts:
            if v.grade:
                groups[f"G{v.grade}" if v.grade.isdigit() else v.grade].append(v)
        out = {}
        for g in sorted(groups):
            vs = groups[g]
            c = sum(v.decision == "correct" for v in vs)
            out[g] = {"n": len(vs), "correct": c, "accuracy": c / len(vs)}
        return out

    def to_json(self, verdicts_path: str | None = None) -> dict:
        decisions = defaultdict(int)
        for v in self.verdicts:
            decisions[v.decision] += 1
        return {"accuracy": self.accuracy, "n": self.n, "correct": self.correct,
                "decisions": dict(sorted(decisions.items())), "per_grade": self.per_grade(),
                "verdicts_path": verdicts_path}

    def table(self) -> str:
        rows = [("group", "n", "correct", "accuracy")]
        for g, s in self.per_grade().items():
            rows.append((g, str(s["n"]), str(s["correct"]), f"{s['accuracy']:.3f}"))
        acc = "n/a" if self.accuracy is None else f"{self.accuracy:.3f}"
        rows.append(("all", str(self.n), str(self.correct), acc))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def read_predictions(path: str | Path) -> list[tuple[str, str]]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append((str(obj["id"]), str(obj.get("response", ""))))
    return out


def grade_dataset(predictions: str | Path | Iterable[tuple[str, str]], gold: Corpus,
                  tol: float = 1e-6) -> GradeReport:
    """Grade ``{id, response}`` predictions against gold records.

    Gold answers come from ``meta["final_answer"]`` when present, else from the
    gold solution text. ``meta["grade"]`` feeds the per-grade table.
    """
    items = read_predictions(predictions) if isinstance(predictions, (str, Path)) else list(predictions)
    golds = gold.by_id()
    report = GradeReport()
    for item_id, response in items:
        rec = golds.get(item_id)
        gold_text = None if rec is None else rec.meta.get("final_answer", rec.answer)
        grade = None if rec is None else rec.meta.get("grade")
        report.verdicts.append(grade_item(item_id, response, gold_text, grade, tol))
    return report
