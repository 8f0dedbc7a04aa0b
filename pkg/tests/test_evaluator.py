import json
import random
from decimal import Decimal, localcontext
from fractions import Fraction

import pytest

from conftest import FIXTURES
from mathclean.corpus import Corpus, Record
from mathclean.evaluator import (ExtractedAnswer, compare, equivalent, extract_answer, grade_dataset,
                                 grade_item, normalize_symbolic)


def _terminating(q: Fraction) -> bool:
    d = q.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    return d == 1


def as_decimal(q: Fraction, places: int = 4) -> str:
    """Exact when the expansion terminates, else rounded half-up to ``places``."""
    with localcontext() as ctx:
        ctx.prec = 60
        d = Decimal(q.numerator) / Decimal(q.denominator)
        if not _terminating(q):
            d = d.quantize(Decimal(1).scaleb(-places), rounding="ROUND_HALF_UP")
        return format(d.normalize() if _terminating(q) else d, "f")


def forms(q: Fraction) -> dict[str, str]:
    return {"fraction": f"{q.numerator}/{q.denominator}",
            "decimal": as_decimal(q),
            "percent": as_decimal(q * 100, 2) + "%"}


def random_rational(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(0, 2000), rng.randint(1, 400))


# --- extraction -----------------------------------------------------------

def test_extract_chicken_farm():
    a = extract_answer("解：2400÷6/5=2000（只）\n答：去年养鸡2000只．")
    assert (a.value, a.unit, a.form) == (2000, "只", "integer")


def test_extract_decimal_with_unit():
    a = extract_answer("x=14.4答：这辆汽车实际用14.4小时到达灾区")
    assert a.value == Fraction(72, 5) and a.unit == "小时" and a.form == "decimal"


def test_extract_symbolic():
    a = extract_answer("故答案为:(2n+1).")
    assert a.form == "symbolic" and a.raw_span == "(2n+1)" and a.value is None


@pytest.mark.parametrize("text, value, form", [
    ("答：$\\frac{6}{5}$", Fraction(6, 5), "fraction"),
    ("答：20%", Fraction(1, 5), "percent"),
    ("答：2又1/2米", Fraction(5, 2), "mixed_number"),
    ("答案为：-3/4", Fraction(-3, 4), "fraction"),
    ("故答案为：1,200元", 1200, "integer"),
    ("先算3+4=7，再算7×2=14", 14, "integer"),
    ("答：１２千克", 12, "integer"),
])
def test_extract_forms(text, value, form):
    a = extract_answer(text)
    assert (a.value, a.form) == (value, form)


def test_units_prefer_the_longest_match():
    assert extract_answer("答：重3千克").unit == "千克"
    assert extract_answer("答：用了20分钟").unit == "分钟"


def test_zero_denominator_is_not_a_number():
    assert extract_answer("答：1/0").value is None


def test_extracted_answer_invariant():
    with pytest.raises(ValueError):
        ExtractedAnswer("x", None, form="integer")


# --- equivalence ----------------------------------------------------------

@pytest.mark.parametrize("pred, gold", [
    ("6/5", "1.2"), ("14.40", "14.4"), ("(2n+1)", "2n+1"), ("20%", "0.2"), ("20%", "1/5"),
    ("0.33", "1/3"), ("33.33%", "1/3"), ("2000只", "2000"), ("1又1/2", "1.5"),
])
def test_equivalent_pairs(pred, gold):
    p, g = extract_answer(pred), extract_answer(gold)
    assert equivalent(p, g) and equivalent(g, p)


@pytest.mark.parametrize("pred, gold, reason", [
    ("0.3", "1/3", "value_mismatch"),  # one place is not an approximation
    ("2000只", "2000米", "unit_conflict"),
    ("1.5", "1.4", "value_mismatch"),
    ("2n+1", "2n-1", "symbolic_mismatch"),
    ("2n", "5", "form_mismatch"),
])
def test_non_equivalent_pairs(pred, gold, reason):
    assert compare(extract_answer(pred), extract_answer(gold)) == (False, reason)


def test_symbolic_normalization():
    assert normalize_symbolic(" ((2n+1)). ") == normalize_symbolic("2n + 1")
    assert normalize_symbolic("(a+b)*(a-b)") == "(a+b)*(a-b)"


def test_reflexive_and_symmetric_over_random_rationals():
    rng = random.Random(0)
    for _ in range(10_000):
        q, r = random_rational(rng), random_rational(rng)
        a = extract_answer(rng.choice(list(forms(q).values())))
        b = extract_answer(rng.choice(list(forms(q if rng.random() < 0.5 else r).values())))
        assert equivalent(a, a)
        assert equivalent(a, b) == equivalent(b, a)


def test_tri_representation_over_random_rationals():
    rng = random.Random(1)
    for _ in range(1_000):
        q = random_rational(rng)
        parsed = [extract_answer(t) for t in forms(q).values()]
        for x in parsed:
            for y in parsed:
                assert equivalent(x, y), (q, x, y)


def test_decimal_helper_oracle():
    assert as_decimal(Fraction(1, 3)) == "0.3333"
    assert as_decimal(Fraction(7, 8)) == "0.875"
    assert as_decimal(Fraction(10)) == "10"
    assert forms(Fraction(2, 3))["percent"] == "66.67%"


# --- grading --------------------------------------------------------------

def test_hand_labelled_verdicts_agree():
    items = [json.loads(l) for l in (FIXTURES / "verdicts_40.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(items) == 40
    got = [grade_item(i["id"], i["response"], i["gold"]).decision for i in items]
    assert got == [i["decision"] for i in items]


def _gold(n):
    return Corpus(tuple(Record(f"g{i}", f"题{i}", f"解：略\n答：{i + 1}个", meta={"grade": str(i % 3 + 1)})
                        for i in range(n)))


def test_identity_predictions_score_one():
    gold = _gold(6)
    report = grade_dataset([(r.id, r.answer) for r in gold], gold)
    assert report.accuracy == 1.0 and report.n == 6
    assert report.per_grade() == {f"G{g}": {"n": 2, "correct": 2, "accuracy": 1.0} for g in (1, 2, 3)}


def test_empty_predictions(tmp_path):
    p = tmp_path / "p.jsonl"
    p.write_text("", encoding="utf-8")
    report = grade_dataset(p, _gold(3))
    assert report.n == 0 and report.accuracy is None
    assert report.to_json()["accuracy"] is None
    assert report.table().splitlines()[-1] == "all    0  0        n/a"


def test_missing_gold_is_unparseable():
    report = grade_dataset([("nope", "答：1")], _gold(1))
    (v,) = report.verdicts
    assert (v.decision, v.reason) == ("unparseable", "missing_gold")


def test_no_number_against_numeric_gold_is_unparseable():
    v = grade_item("x", "我不知道", "5")
    assert v.decision == "unparseable"


def test_grading_is_order_invariant():
    gold = _gold(10)
    rng = random.Random(3)
    preds = [(r.id, f"答：{rng.randint(1, 12)}个") for r in gold]
    a = grade_dataset(preds, gold)
    b = grade_dataset(list(reversed(preds)), gold)
    assert a.correct == b.correct and a.per_grade() == b.per_grade()


def test_final_answer_meta_overrides_solution():
    gold = Corpus((Record("a", "题", "很长的解答，最后是5", meta={"final_answer": "7"}),))
    assert grade_dataset([("a", "答：7")], gold).correct == 1


def test_bundled_predictions(data_dir, sample_seed):
    report = grade_dataset(data_dir / "sample_predictions.jsonl", sample_seed)
    assert (report.n, report.correct) == (50, 40)
    out = report.to_json("v.jsonl")
    assert out["decisions"] == {"correct": 40, "incorrect": 10}
    assert all(not l.endswith(" ") for l in report.table().splitlines())
