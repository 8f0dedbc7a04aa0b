"""Numbered acceptance criteria; a PASS/FAIL line per criterion is printed at the end of the run."""

import filecmp
import json
import random
import time
from pathlib import Path

import pytest

from conftest import as_record
from oracles import brute_force, dp_subsequence, random_corpora
from mathclean import schemas
from mathclean.cli import main
from mathclean.corpus import Source
from mathclean.degrader import (FRACTION_FLATTEN, LINEBREAK_DROP, SUPERSCRIPT_DROP, SYMBOL_SUBSTITUTE,
                                DegradationSpec, degrade)
from mathclean.evaluator import equivalent, extract_answer, grade_item
from mathclean.matcher import Dedup, MatchConfig, is_subsequence, match_pairs
from mathclean.rewrite_client import EndpointConfig, RewriteClient, RunInterrupted, assemble_cleaned
from mathclean.rulecleaner import clean
from mathclean.sftgen import Status, extract_output, render_target
from mathclean.stub import StubServer
from mathclean.synth import generate_records
from test_evaluator import forms, random_rational

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).resolve().parents[1] / "src" / "mathclean" / "data"


def fast_endpoint(url, **kw):
    kw.setdefault("requests_per_minute", 60000)
    kw.setdefault("backoff_base", 0.001)
    return EndpointConfig(url, **kw)


# 1 -----------------------------------------------------------------------

@pytest.mark.acceptance(1, "oracle recovery on 1,000 degraded records (recall/precision 100%, < 10 s)")
def test_matching_oracle_recovery(clean_1000):
    classes = (FRACTION_FLATTEN, LINEBREAK_DROP, SUPERSCRIPT_DROP, SYMBOL_SUBSTITUTE)
    spec = DegradationSpec(frozenset(classes), {c: 1.0 for c in classes}, rng_seed=0)
    t0 = time.perf_counter()
    crawl, manifest = degrade(clean_1000, spec)
    pairs = match_pairs(clean_1000, crawl)
    elapsed = time.perf_counter() - t0
    # every degraded record keeps its seed id, so the true pairing is the identity
    truth = {(r.id, r.id) for r in clean_1000}
    assert len(manifest.degraded_ids()) > 900
    found = {(p.seed_id, p.crawl_id) for p in pairs.pairs}
    recall = len(found & truth) / len(truth)
    precision = len(found & truth) / len(found)
    print(f"criterion 1: recall {recall:.4f} precision {precision:.4f} in {elapsed:.2f}s")
    assert recall == 1.0 and precision == 1.0
    assert elapsed < 10.0


# 2 -----------------------------------------------------------------------

@pytest.mark.acceptance(2, "match_pairs equals exhaustive predicate on 50 random corpora")
def test_brute_force_equivalence():
    rng = random.Random(7)
    discrepancies = 0
    for _ in range(50):
        n = rng.randint(0, 200)
        n_seed = rng.randint(0, n)
        seed, crawl = random_corpora(rng, n_seed, n - n_seed)
        min_len = rng.choice([0, 1, 2, 4, 8])
        got = match_pairs(seed, crawl, MatchConfig("subsequence", min_len, Dedup.NONE))
        triples = {(p.seed_id, p.crawl_id, p.reason.value) for p in got.pairs}
        discrepancies += triples != brute_force(seed, crawl, min_len)
    assert discrepancies == 0


# 3 -----------------------------------------------------------------------

@pytest.mark.acceptance(3, "is_subsequence agrees with a DP oracle on 10,000 pairs")
def test_subsequence_matches_dp_oracle():
    rng = random.Random(3)
    alphabet = "ab1光"
    bad = 0
    for _ in range(10_000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 50)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 50)))
        if rng.random() < 0.3:
            # plant a in b so the positive side is well covered
            b = "".join(c + rng.choice(["", rng.choice(alphabet)]) for c in a)[:50]
        bad += is_subsequence(a, b) != dp_subsequence(a, b)
    assert bad == 0


# 4 -----------------------------------------------------------------------

@pytest.mark.acceptance(4, "report stage emits pair_rate 28.9% for 24,336 / 84,095")
def test_pair_rate_arithmetic(tmp_path, capsys):
    assert main(["report", "--seed-total", "84095", "--pairs", "24336", "--no-figures",
                 "--output-dir", str(tmp_path)]) == 0
    assert "pair_rate 28.9%" in capsys.readouterr().out
    rate = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))["pair_rate"]
    assert abs(rate["pair_rate"] * 100 - 28.9) <= 0.05
    assert rate["pair_rate_pct"] == "28.9%"


# 5 -----------------------------------------------------------------------

@pytest.mark.acceptance(5, "rule cleaner reproduces both worked cases byte-exact and is idempotent")
def test_rule_cleaner_fixtures(cases):
    out, _ = clean(as_record(cases["rule_fraction_crawl"], "a", Source.CRAWL))
    assert (out.question, out.answer) == (cases["rule_fraction_expected"]["question"],
                                          cases["rule_fraction_expected"]["answer"])
    out, _ = clean(as_record(cases["rule_equation_crawl"], "b", Source.CRAWL))
    assert out.answer == cases["rule_equation_expected"]["answer"]
    for name, obj in cases.items():
        once, _ = clean(as_record(obj, name, Source.CRAWL))
        twice, changes = clean(once)
        assert (twice.question, twice.answer) == (once.question, once.answer) and not changes, name


# 6 -----------------------------------------------------------------------

def marker_mutations(target: str) -> list[str]:
    q, a = "[问题]", "[答案]"
    body_q, body_a = target[len(q):].split(a)
    return [
        f"{a}{body_a}\n{q}{body_q}",                 # inverted
        f"{a}{body_q}{q}{body_a}",                   # markers swapped in place
        f"{body_q}{a}{body_a}",                      # question marker missing
        f"{q}{body_q}{body_a}",                      # answer marker missing
        f"{body_q}{body_a}",                         # both missing
        target.replace(q, "问题", 1),                 # marker mangled
        target.replace(a, "[答 案]", 1),
    ]


@pytest.mark.acceptance(6, "1,000 render/extract round trips; marker mutations are malformed")
def test_round_trip_integrity():
    records = generate_records(1000, seed=11, prefix="t")
    for r in records:
        target = render_target(r)
        out = extract_output(target, r.id)
        assert out.status is Status.OK and out.parsed == (r.question, r.answer), r.id
        for bad in marker_mutations(target):
            assert extract_output(bad, r.id).status is Status.MALFORMED, (r.id, bad)


# 7 -----------------------------------------------------------------------

@pytest.mark.acceptance(7, "rewrite client: resume without duplicates, retries, oracle round trip")
def test_rewrite_client_kill_and_resume(sample_seed, sample_crawl, tmp_path):
    with StubServer.oracle(sample_seed, sample_crawl) as stub:
        ep = fast_endpoint(stub.url, max_concurrency=1)
        with RewriteClient(ep) as client, pytest.raises(RunInterrupted):
            client.rewrite_corpus(sample_crawl, tmp_path / "resumed.jsonl", stop_after=17)
        with RewriteClient(ep) as client:
            resumed = client.rewrite_corpus(sample_crawl, tmp_path / "resumed.jsonl")
        assert sorted(stub.counts.values()) == [1] * len(sample_crawl)  # zero duplicate requests
    with StubServer.oracle(sample_seed, sample_crawl) as stub, RewriteClient(fast_endpoint(stub.url)) as client:
        straight = client.rewrite_corpus(sample_crawl, tmp_path / "straight.jsonl")
    assert [o.to_json() for o in resumed.outputs] == [o.to_json() for o in straight.outputs]
    assert (tmp_path / "resumed.jsonl").read_bytes() == (tmp_path / "straight.jsonl").read_bytes()


@pytest.mark.acceptance(7, "rewrite client: resume without duplicates, retries, oracle round trip")
@pytest.mark.parametrize("code", [429, 500])
def test_rewrite_client_retries(sample_seed, sample_crawl, tmp_path, code):
    plan = lambda prompt, attempt: code if attempt <= 2 else None  # noqa: E731
    with StubServer.oracle(sample_seed, sample_crawl, fault_plan=plan) as stub, \
            RewriteClient(fast_endpoint(stub.url, max_retries=3)) as client:
        result = client.rewrite_corpus(sample_crawl, tmp_path / "ck.jsonl")
        assert max(stub.counts.values()) <= 1 + 3
    assert not result.failed and len(result.outputs) == len(sample_crawl)


@pytest.mark.acceptance(7, "rewrite client: resume without duplicates, retries, oracle round trip")
def test_rewrite_client_oracle_gives_paired_seeds(sample_seed, sample_crawl, tmp_path):
    pairs = match_pairs(sample_seed, sample_crawl)
    links = {p.crawl_id: p.seed_id for p in pairs.pairs}
    with StubServer.oracle(sample_seed, sample_crawl, links) as stub, \
            RewriteClient(fast_endpoint(stub.url)) as client:
        result = client.rewrite_corpus(sample_crawl, tmp_path / "ck.jsonl")
    cleaned, _ = assemble_cleaned(result.outputs)
    seeds = sample_seed.by_id()
    got = {r.id.removeprefix("cleaned:"): (r.question, r.answer) for r in cleaned}
    want = {cid: (seeds[sid].question, seeds[sid].answer) for cid, sid in links.items()}
    assert got == want


# 8 -----------------------------------------------------------------------

@pytest.mark.acceptance(8, "evaluator: 40/40 fixture, reflexivity/symmetry, tri-representation")
def test_evaluator_fixture_agreement():
    items = [json.loads(l) for l in (FIXTURES / "verdicts_40.jsonl").read_text(encoding="utf-8").splitlines()]
    agree = sum(grade_item(i["id"], i["response"], i["gold"]).decision == i["decision"] for i in items)
    assert (agree, len(items)) == (40, 40)


@pytest.mark.acceptance(8, "evaluator: 40/40 fixture, reflexivity/symmetry, tri-representation")
def test_evaluator_reflexive_symmetric():
    rng = random.Random(80)
    for _ in range(10_000):
        q, r = random_rational(rng), random_rational(rng)
        x = extract_answer(rng.choice(list(forms(q).values())))
        y = extract_answer(rng.choice(list(forms(rng.choice([q, r])).values())))
        assert equivalent(x, x) and equivalent(y, y)
        assert equivalent(x, y) == equivalent(y, x)


@pytest.mark.acceptance(8, "evaluator: 40/40 fixture, reflexivity/symmetry, tri-representation")
def test_evaluator_tri_representation():
    rng = random.Random(81)
    for _ in range(1_000):
        q = random_rational(rng)
        parsed = [extract_answer(t) for t in forms(q).values()]
        assert all(equivalent(x, y) for x in parsed for y in parsed), q


# 9 -----------------------------------------------------------------------

PRODUCTS = ["pairs.jsonl", "train.jsonl", "cleaned.jsonl", "report.json", "report.tsv", "match_report.json",
            "rewrite_outputs.jsonl", "rewrite_checkpoint.jsonl"]
KINDS = {"pairs.jsonl": "pairs", "train.jsonl": "train", "cleaned.jsonl": "cleaned",
         "rewrite_outputs.jsonl": "rewrite_outputs", "rewrite_checkpoint.jsonl": "checkpoint"}


@pytest.mark.acceptance(9, "pipeline on the 50-record sample: < 30 s, schema-valid, reproducible")
def test_end_to_end_pipeline(sample_seed, sample_crawl, tmp_path):
    runs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        # a fresh stub per run, so the port differs between runs
        with StubServer.oracle(sample_seed, sample_crawl) as stub:
            t0 = time.perf_counter()
            rc = main(["pipeline", "--seed-corpus", str(DATA / "sample_seed.jsonl"),
                       "--crawl-corpus", str(DATA / "sample_crawl.jsonl"), "--base-url", stub.url,
                       "--rpm", "6000", "--seed", "7", "--output-dir", str(out)])
            elapsed = time.perf_counter() - t0
        print(f"criterion 9: {name} finished in {elapsed:.2f}s")
        assert rc == 0 and elapsed < 30.0
        for f in PRODUCTS:
            assert (out / f).exists(), f
        errors = [e for f, k in KINDS.items() for e in schemas.validate_jsonl(out / f, k)]
        errors += schemas.validate_json(out / "match_report.json", "match_report")
        errors += schemas.validate_json(out / "report.json", "report")
        assert errors == []
        runs.append(out)
    a, b = runs
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        if n != "report.json":  # holds wall-clock timings and a timestamp
            assert filecmp.cmp(a / n, b / n, shallow=False), n

    def stable(p):
        obj = json.loads(p.read_text(encoding="utf-8"))
        return {k: v for k, v in obj.items() if k not in ("timings", "created_at")}

    assert stable(a / "report.json") == stable(b / "report.json")
    assert json.loads((a / "report.json").read_text(encoding="utf-8"))["consistency_problems"] == []
