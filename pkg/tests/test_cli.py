import filecmp
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mathclean import schemas
from mathclean.cli import main
from mathclean.stub import StubServer

DATA = Path(__file__).resolve().parents[1] / "src" / "mathclean" / "data"
SEED = ["--seed-corpus", str(DATA / "sample_seed.jsonl")]
CRAWL = ["--crawl-corpus", str(DATA / "sample_crawl.jsonl")]

# artifact -> schema kind
JSONL_KINDS = {"corpus.jsonl": "corpus", "crawl.jsonl": "corpus", "manifest.jsonl": "manifest",
               "pairs.jsonl": "pairs", "train.jsonl": "train", "rewrite_checkpoint.jsonl": "checkpoint",
               "rewrite_outputs.jsonl": "rewrite_outputs", "cleaned.jsonl": "cleaned",
               "verdicts.jsonl": "verdicts", "rule_cleaned.jsonl": "corpus"}
JSON_KINDS = {"match_report.json": "match_report", "eval_report.json": "eval_report", "report.json": "report"}


@pytest.fixture(scope="module")
def stub(sample_seed, sample_crawl):
    with StubServer.oracle(sample_seed, sample_crawl) as s:
        yield s


def endpoint_args(stub):
    return ["--base-url", stub.url, "--rpm", "60000"]


def schema_errors(out: Path) -> list[str]:
    errs = []
    for name, kind in JSONL_KINDS.items():
        if (out / name).exists():
            errs += schemas.validate_jsonl(out / name, kind)
    for name, kind in JSON_KINDS.items():
        if (out / name).exists():
            errs += schemas.validate_json(out / name, kind)
    return errs


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_bad_flag_value_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["match", "--dedup", "sometimes"])
    assert exc.value.code == 2


def test_module_entry_point_exit_codes(tmp_path):
    run = lambda *a: subprocess.run([sys.executable, "-m", "mathclean", *a], capture_output=True,  # noqa: E731
                                    text=True, cwd=tmp_path)
    assert run("bogus").returncode == 2
    bad = run("match", *SEED, "--crawl-corpus", "missing.jsonl")
    assert bad.returncode == 1 and "crawl_corpus" in bad.stderr
    assert run("--help").returncode == 0


def test_missing_input_names_the_field(tmp_path, capsys):
    rc = main(["match", *SEED, "--crawl-corpus", str(tmp_path / "nope.jsonl"), "--output-dir", str(tmp_path)])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: crawl_corpus: path does not exist")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mtach": {}}), encoding="utf-8")
    assert main(["match", *SEED, *CRAWL, "--config", str(cfg), "--output-dir", str(tmp_path)]) == 1
    assert "mtach: unknown config key" in capsys.readouterr().err


@pytest.mark.parametrize("cfg, field", [
    ({"match": {"min_answer_len": -1}}, "match.min_answer_len"),
    ({"match": {"dedup": "maybe"}}, "match.dedup"),
    ({"seed": -1}, "seed"),
    ({"workers": 0}, "workers"),
])
def test_invalid_config_values_name_the_field(tmp_path, capsys, cfg, field):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    assert main(["match", *SEED, *CRAWL, "--config", str(path), "--output-dir", str(tmp_path / "o")]) == 1
    assert f"error: {field}" in capsys.readouterr().err


def test_invalid_endpoint_names_the_field(tmp_path, capsys):
    rc = main(["rewrite", *CRAWL, "--base-url", "http://x", "--max-concurrency", "0",
               "--output-dir", str(tmp_path)])
    assert rc == 1 and "endpoint.max_concurrency" in capsys.readouterr().err
    assert main(["rewrite", *CRAWL, "--output-dir", str(tmp_path)]) == 1
    assert "endpoint.base_url" in capsys.readouterr().err


def test_output_dir_that_is_a_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    assert main(["match", *SEED, *CRAWL, "--output-dir", str(f)]) == 1


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    for argv in (["match", *SEED, *CRAWL], ["degrade", *SEED], ["rule-clean", *CRAWL],
                 ["pipeline", *SEED, *CRAWL, "--base-url", "http://127.0.0.1:1"]):
        assert main([*argv, "--output-dir", str(out), "--dry-run"]) == 0
    assert not out.exists()
    assert "dry run: configuration and inputs are valid" in capsys.readouterr().out


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"match": {"min_answer_len": 500, "dedup": "none"},
                               "seed_corpus": str(DATA / "sample_seed.jsonl")}), encoding="utf-8")
    assert main(["match", *CRAWL, "--config", str(cfg), "--output-dir", str(tmp_path / "a")]) == 0
    rep_a = json.loads((tmp_path / "a" / "match_report.json").read_text(encoding="utf-8"))
    assert rep_a["min_answer_len"] == 500 and rep_a["dedup"] == "none"
    assert main(["match", *CRAWL, "--config", str(cfg), "--min-answer-len", "4",
                 "--output-dir", str(tmp_path / "b")]) == 0
    rep_b = json.loads((tmp_path / "b" / "match_report.json").read_text(encoding="utf-8"))
    assert rep_b["min_answer_len"] == 4 and rep_b["dedup"] == "none"


def test_report_reproduces_headline_rate(tmp_path, capsys):
    rc = main(["report", "--seed-total", "84095", "--pairs", "24336", "--output-dir", str(tmp_path),
               "--no-figures"])
    assert rc == 0
    assert "pair_rate 28.9% (24336 / 84095)" in capsys.readouterr().out
    obj = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert obj["pair_rate"]["pair_rate_pct"] == "28.9%"
    assert schemas.validate_json(tmp_path / "report.json", "report") == []


def test_report_counts_must_come_together(tmp_path, capsys):
    assert main(["report", "--seed-total", "10", "--output-dir", str(tmp_path)]) == 1
    assert "report.pairs" in capsys.readouterr().err


def test_match_prints_pair_rate(tmp_path, capsys):
    assert main(["match", *SEED, *CRAWL, "--output-dir", str(tmp_path)]) == 0
    assert "pairs 35 / seed 50 -> pair_rate 70.0%" in capsys.readouterr().out


def test_degrade_stage(tmp_path):
    assert main(["degrade", *SEED, "--output-dir", str(tmp_path), "--seed", "3"]) == 0
    rep = json.loads((tmp_path / "degrade_report.json").read_text(encoding="utf-8"))
    assert rep["records"] == 50 and rep["notes"]
    assert schema_errors(tmp_path) == []
    first = (tmp_path / "crawl.jsonl").read_bytes()
    assert main(["degrade", *SEED, "--output-dir", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / "crawl.jsonl").read_bytes() == first


def test_degrade_rejects_unknown_class(tmp_path, capsys):
    assert main(["degrade", *SEED, "--classes", "smudge", "--output-dir", str(tmp_path)]) == 1
    assert "degrade.error_classes" in capsys.readouterr().err


def test_ingest_and_rule_clean_stages(tmp_path):
    assert main(["ingest", "--input", str(DATA / "sample_crawl.jsonl"), "--source", "crawl",
                 "--output-dir", str(tmp_path)]) == 0
    assert main(["rule-clean", "--crawl-corpus", str(tmp_path / "corpus.jsonl"),
                 "--output-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "rule_cleaned.jsonl").read_text(encoding="utf-8").splitlines()) == 50
    assert len((tmp_path / "changesets.jsonl").read_text(encoding="utf-8").splitlines()) == 50
    assert schema_errors(tmp_path) == []


def test_evaluate_stage(tmp_path, capsys):
    assert main(["evaluate", "--predictions", str(DATA / "sample_predictions.jsonl"),
                 "--gold", str(DATA / "sample_seed.jsonl"), "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].split() == ["all", "50", "40", "0.800"]
    assert schema_errors(tmp_path) == []


def test_emit_pairs_needs_pairs(tmp_path, capsys):
    assert main(["emit-pairs", *SEED, *CRAWL, "--output-dir", str(tmp_path)]) == 1
    assert "pairs: path does not exist" in capsys.readouterr().err


def test_pipeline_equals_stage_by_stage(tmp_path, stub):
    a, b = tmp_path / "a", tmp_path / "b"
    ep = endpoint_args(stub)
    assert main(["pipeline", *SEED, *CRAWL, *ep, "--output-dir", str(a)]) == 0
    for argv in (["match", *SEED, *CRAWL], ["emit-pairs", *SEED, *CRAWL], ["rewrite", *CRAWL, *ep],
                 ["assemble"], ["report"]):
        assert main([*argv, "--output-dir", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert {"cleaned.jsonl", "report.json", "report.tsv", "pair_reasons.png"} <= set(names)
    for name in names:
        if name != "report.json":
            assert filecmp.cmp(a / name, b / name, shallow=False), name
    assert schema_errors(a) == []


def test_rewrite_resumes_from_existing_checkpoint(tmp_path, stub):
    ep = endpoint_args(stub)
    assert main(["rewrite", *CRAWL, *ep, "--output-dir", str(tmp_path)]) == 0
    before = dict(stub.counts)
    assert main(["rewrite", *CRAWL, *ep, "--output-dir", str(tmp_path)]) == 0
    assert dict(stub.counts) == before
    assert main(["rewrite", *CRAWL, *ep, "--temperature", "0.5", "--output-dir", str(tmp_path)]) == 1
