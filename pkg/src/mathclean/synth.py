"""Deterministic generator for clean elementary-school math records.

Used to build the bundled corpora under ``mathclean/data``; the problems are
templated word problems with LaTeX fractions, superscripts, ``×`` and ``+``
so every damage class has sites to work on.
"""

from __future__ import annotations

import json
import random
from fractions import Fraction
from importlib import resources
from math import gcd
from pathlib import Path

from .corpus import Corpus, Record, Source, ingest, normalize, write_corpus
from .degrader import DegradationSpec, degrade

PLACES = ["光明养鸡场", "红星养鸡场", "幸福农场", "向阳养殖场", "希望农场", "东风养鸡场", "新华农场",
          "长江养殖场", "黄河农场", "青山养鸡场", "绿野农场", "明珠养殖场"]
NAMES = ["小明", "小红", "小华", "小刚", "小丽", "小军", "小芳", "小强", "小亮", "小雪", "小林", "小东"]
SHOPS = ["学校", "文具店", "超市", "商店", "书店", "水果店"]
ITEMS = [("支", "铅笔"), ("本", "练习本"), ("个", "书包"), ("千克", "苹果"), ("千克", "大米"),
         ("盒", "彩笔"), ("瓶", "矿泉水"), ("把", "尺子")]


def _frac(n: int, d: int) -> str:
    return f"$\\frac{{{n}}}{{{d}}}$"


def _num(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return _frac(q.numerator, q.denominator)


def _t_increase(rng):
    k = rng.randint(2, 9)
    t = rng.randint(10, 400)
    last, now = k * t, (k + 1) * t
    place = rng.choice(PLACES)
    q = f"{place}今年养鸡{now}只，比去年增加{_frac(1, k)}，去年养鸡多少只？"
    a = (f"解：{now}÷（1+{_frac(1, k)}）\n={now}÷{_frac(k + 1, k)}\n={last}（只）\n"
         f"答：去年养鸡{last}只．")
    return q, a, "6"


def _t_cuboid(rng):
    a, b, c = rng.randint(2, 40), rng.randint(2, 40), rng.randint(2, 40)
    v = a * b * c
    q = f"一个长方体长{a}厘米，宽{b}厘米，高{c}厘米，它的体积是多少立方厘米？"
    ans = f"解：{a}×{b}×{c}\n={v}（立方厘米）\n答：它的体积是{v}立方厘米．"
    return q, ans, "5"


def _t_square(rng):
    a = rng.randint(3, 99)
    what = rng.choice(["花坛", "菜地", "草坪", "游泳池", "操场"])
    q = f"一个正方形{what}的边长是{a}米，它的面积是多少平方米？"
    ans = f"解：{a}$^{{2}}$\n={a}×{a}\n={a * a}（平方米）\n答：它的面积是{a * a}平方米．"
    return q, ans, "3"


def _t_price(rng):
    unit, item = rng.choice(ITEMS)
    n, p = rng.randint(2, 60), rng.randint(2, 90)
    who = rng.choice(SHOPS)
    q = f"{who}买了{n}{unit}{item}，每{unit}{p}元，一共花了多少元？"
    ans = f"解：{p}×{n}={p * n}（元）\n答：一共花了{p * n}元．"
    return q, ans, "2"


def _t_travel(rng):
    v, t = rng.randint(30, 120), rng.randint(2, 15)
    what = rng.choice(["汽车", "货车", "客车", "摩托车"])
    q = f"一辆{what}每小时行驶{v}千米，{t}小时行驶多少千米？（用方程解）"
    ans = (f"解：设{what}{t}小时行驶$x$千米，\n$x$={v}×{t}\n$x$={v * t}\n"
           f"答：{what}{t}小时行驶{v * t}千米．")
    return q, ans, "5"


def _t_rope(rng):
    while True:
        b, d = rng.randint(3, 12), rng.randint(3, 12)
        a, c = rng.randint(1, b - 1), rng.randint(1, d - 1)
        used = Fraction(a, b) + Fraction(c, d)
        if used < 1 and gcd(a, b) == 1 and gcd(c, d) == 1:
            break
    base = used.denominator * (1 - used).denominator
    length = base * rng.randint(1, 6)
    rest = length * (1 - used)
    q = (f"一根绳子长{length}米，第一次用去全长的{_frac(a, b)}，第二次用去全长的{_frac(c, d)}，"
         f"还剩多少米？")
    ans = (f"解：{length}×（1-{_frac(a, b)}-{_frac(c, d)}）\n={length}×{_num(1 - used)}\n"
           f"={_num(rest)}（米）\n答：还剩{_num(rest)}米．")
    return q, ans, "6"


def _t_squares_diff(rng):
    a = rng.randint(3, 60)
    b = rng.randint(1, a - 1)
    q = f"计算：{a}$^{{2}}$-{b}$^{{2}}$的结果是多少？"
    ans = (f"解：{a}$^{{2}}$-{b}$^{{2}}$\n={a * a}-{b * b}\n={a * a - b * b}\n"
           f"答：结果是{a * a - b * b}．")
    return q, ans, "6"


def _t_part(rng):
    b = rng.randint(3, 12)
    a = rng.randint(1, b - 1)
    while gcd(a, b) != 1:
        a = rng.randint(1, b - 1)
    total = b * rng.randint(5, 90)
    done = total * a // b
    what = rng.choice(["一条路", "一段水渠", "一条隧道", "一段公路"])
    q = f"修{what}，已经修了全长的{_frac(a, b)}，正好是{done}米，这{what[1:]}全长多少米？"
    ans = (f"解：{done}÷{_frac(a, b)}\n={done}×{_frac(b, a)}\n={total}（米）\n"
           f"答：这{what[1:]}全长{total}米．")
    return q, ans, "6"


def _t_books(rng):
    n1, n2 = rng.sample(NAMES, 2)
    a, b = rng.randint(5, 200), rng.randint(1, 90)
    q = f"{n1}有{a}本书，{n2}比{n1}多{b}本，两人一共有多少本书？"
    ans = (f"解：{a}+（{a}+{b}）\n={a}+{a + b}\n={2 * a + b}（本）\n"
           f"答：两人一共有{2 * a + b}本书．")
    return q, ans, "2"


def _t_average(rng):
    name = rng.choice(NAMES)
    while True:
        xs = [rng.randint(60, 100) for _ in range(3)]
        if sum(xs) % 3 == 0:
            break
    s = sum(xs)
    q = f"{name}前三次数学测验成绩分别是{xs[0]}分、{xs[1]}分、{xs[2]}分，平均成绩是多少分？"
    ans = (f"解：（{xs[0]}+{xs[1]}+{xs[2]}）÷3\n={s}÷3\n={s // 3}（分）\n"
           f"答：平均成绩是{s // 3}分．")
    return q, ans, "4"


def _t_work(rng):
    a, b = rng.sample(range(3, 40), 2)
    days = Fraction(a * b, a + b)
    q = f"一项工程，甲队单独做要{a}天完成，乙队单独做要{b}天完成，两队合做多少天完成？"
    ans = (f"解：1÷（{_frac(1, a)}+{_frac(1, b)}）\n=1÷{_num(Fraction(a + b, a * b))}\n"
           f"={_num(days)}（天）\n答：两队合做{_num(days)}天完成．")
    return q, ans, "6"


def _t_cylinder(rng):
    r, h = rng.randint(1, 20), rng.randint(2, 30)
    v = Fraction(314, 100) * r * r * h
    vs = f"{float(v):.2f}".rstrip("0").rstrip(".")
    q = f"一个圆柱的底面半径是{r}厘米，高是{h}厘米，它的体积是多少立方厘米？"
    ans = (f"解：3.14×{r}$^{{2}}$×{h}\n=3.14×{r * r}×{h}\n={vs}（立方厘米）\n"
           f"答：它的体积是{vs}立方厘米．")
    return q, ans, "6"


TEMPLATES = [_t_increase, _t_cuboid, _t_square, _t_price, _t_travel, _t_rope, _t_squares_diff,
             _t_part, _t_books, _t_average, _t_work, _t_cylinder]


def generate_records(n: int, seed: int = 0, prefix: str = "r") -> list[Record]:
    """``n`` clean seed records, ids ``{prefix}0000``...

    Both the normalized question and the normalized answer are unique across
    the output, so any cross-record match comes from damage, not duplicates.
    """
    rng = random.Random(seed)
    seen: set[str] = set()
    out: list[Record] = []
    width = max(4, len(str(n - 1)))
    while len(out) < n:
        q, a, grade = rng.choice(TEMPLATES)(rng)
        keys = {"q:" + normalize(q).text, "a:" + normalize(a).text}
        if keys & seen:
            continue
        seen |= keys
        out.append(Record(f"{prefix}{len(out):0{width}d}", q, a, Source.SEED, {"grade": grade}))
    return out


def bundled_path(name: str):
    return resources.files("mathclean") / "data" / name


def load_bundled(name: str, source: Source | str = Source.SEED) -> Corpus:
    with resources.as_file(bundled_path(name)) as p:
        return ingest(p, source)


SAMPLE_DEGRADE = ("fraction_flatten", "linebreak_drop", "superscript_drop", "symbol_substitute")


def _wrong(answer: str) -> str:
    """Bump the last integer in ``answer`` by one."""
    digits = [i for i, ch in enumerate(answer) if ch.isdigit()]
    end = digits[-1] + 1
    start = end
    while start > 0 and answer[start - 1].isdigit():
        start -= 1
    return answer[:start] + str(int(answer[start:end]) + 1) + answer[end:]


def build_bundled(out_dir) -> dict[str, int]:
    """Regenerate every bundled data file into ``out_dir``; returns line counts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(generate_records(1000, seed=0, prefix="r"), out / "clean_1000.jsonl")

    pool = generate_records(65, seed=1, prefix="s")
    seed, paired, unpaired = pool[:50], pool[:35], pool[50:]
    spec = DegradationSpec(frozenset(SAMPLE_DEGRADE), {c: 0.5 for c in SAMPLE_DEGRADE}, rng_seed=1)
    crawl, _ = degrade(Corpus(tuple(paired)), spec)
    strays, _ = degrade(Corpus(tuple(Record(f"w{i:04d}", r.question, r.answer, Source.SEED, r.meta)
                                     for i, r in enumerate(unpaired))), spec)
    write_corpus(seed, out / "sample_seed.jsonl")
    write_corpus([*crawl.records, *strays.records], out / "sample_crawl.jsonl")

    with (out / "sample_predictions.jsonl").open("w", encoding="utf-8") as fh:
        for i, r in enumerate(seed):
            answer = _wrong(r.answer) if i % 5 == 4 else r.answer
            fh.write(json.dumps({"id": r.id, "response": "我们一步一步来。\n" + answer},
                                ensure_ascii=False) + "\n")
    return {p.name: sum(1 for _ in p.open(encoding="utf-8")) for p in sorted(out.glob("*.jsonl"))}
