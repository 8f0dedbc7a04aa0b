"""Command-line front end: one subcommand per stage plus ``pipeline``.

Every stage reads and writes plain files in ``--output-dir`` under fixed
names, so stages can be run one at a time or chained. Settings come from an
optional JSON ``--config``; any flag overrides its config counterpart.

Exit codes: 0 success, 1 config or data error (the offending field is
named), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import report as reporting
from .corpus import Corpus, CorpusError, Source, ingest, write_corpus
from .degrader import ERROR_CLASSES, DEFAULT_RATE, DegradationSpec, degrade
from .evaluator import grade_dataset
from .matcher import MatchConfig, match_pairs, pair_rate_summary, read_pairs, write_pairs
from .rewrite_client import (EndpointConfig, RewriteClient, RewriteError, assemble_cleaned,
                             read_outputs, write_outputs)
from .rulecleaner import DEFAULT_REGISTRY, RuleRegistry, clean
from .sftgen import AugmentationConfig, build_training_set, write_training_set

logger = logging.getLogger("mathclean")

# stable artifact names
CORPUS = "corpus.jsonl"
CRAWL = "crawl.jsonl"
MANIFEST = "manifest.jsonl"
PAIRS = "pairs.jsonl"
RULE_CLEANED = "rule_cleaned.jsonl"
CHANGESETS = "changesets.jsonl"
TRAIN = "train.jsonl"
CHECKPOINT = "rewrite_checkpoint.jsonl"
OUTPUTS = "rewrite_outputs.jsonl"
CLEANED = "cleaned.jsonl"
VERDICTS = "verdicts.jsonl"

CONFIG_KEYS = {
    "seed_corpus", "crawl_corpus", "input", "source", "output_dir", "seed", "workers",
    "match", "degrade", "degradation_spec", "rules", "endpoint", "augmentation", "train",
    "rewrite", "evaluate", "report",
}


class ConfigError(Exception):
    """A configuration or input problem; ``field`` names the offending setting."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Context:
    args: argparse.Namespace
    config: dict
    out: Path
    dry_run: bool
    seed: int
    workers: int
    timings: dict[str, float] = field(default_factory=dict)

    def get(self, attr: str, key: str, default: Any = None) -> Any:
        """Flag value if given, else the dotted config ``key``, else ``default``."""
        val = getattr(self.args, attr, None)
        if val is not None:
            return val
        node: Any = self.config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def path(self, attr: str, key: str, default: str | None = None, must_exist: bool = True) -> Path:
        val = self.get(attr, key)
        if val is None:
            if default is None:
                raise ConfigError(key, "required path not given")
            val = str(self.out / default)
        p = Path(val)
        if must_exist and not p.exists():
            raise ConfigError(key, f"path does not exist: {p}")
        return p

    def fingerprint(self) -> str:
        cfg = {k: v for k, v in self.config.items() if k != "output_dir"}
        cfg["seed"] = self.seed
        return reporting.config_fingerprint(cfg)


def _dump_json(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_corpus(ctx: Context, attr: str, key: str, source: Source, default: str | None = None) -> Corpus:
    path = ctx.path(attr, key, default)
    try:
        return ingest(path, source)
    except (CorpusError, UnicodeDecodeError) as exc:
        raise ConfigError(key, str(exc)) from exc


def _build(key: str, factory: Callable, *a, **kw):
    """Construct a config dataclass, turning validation errors into ConfigError."""
    try:
        return factory(*a, **kw)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        inner = msg.split(":", 1)[0] if ":" in msg else ""
        if not inner or " " in inner:
            name = key
        elif inner.startswith(key + "."):
            name = inner
        else:
            name = f"{key}.{inner}"
        raise ConfigError(name, msg) from exc


# stages; each returns its stage report (or None on dry run)

def stage_ingest(ctx: Context) -> dict | None:
    source = _build("source", Source, ctx.get("source", "source", "seed"))
    corpus = _load_corpus(ctx, "input", "input", source)
    rep = {"source": source.value, "ingested": len(corpus), "skipped": corpus.skipped}
    if ctx.dry_run:
        return rep
    write_corpus(corpus, ctx.out / CORPUS)
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["ingest"])
    return rep


def _degradation_spec(ctx: Context) -> DegradationSpec:
    spec_path = ctx.get("spec", "degradation_spec")
    if spec_path is not None:
        if not Path(spec_path).exists():
            raise ConfigError("degradation_spec", f"path does not exist: {spec_path}")
        obj = json.loads(Path(spec_path).read_text(encoding="utf-8"))
    else:
        obj = dict(ctx.config.get("degrade", {}))
    if getattr(ctx.args, "classes", None):
        obj["error_classes"] = [c.strip() for c in ctx.args.classes.split(",") if c.strip()]
    obj.setdefault("error_classes", [c for c in ERROR_CLASSES if c not in ("garble", "question_info_drop")])
    if getattr(ctx.args, "rate", None) is not None:
        obj["rates"] = {c: ctx.args.rate for c in obj["error_classes"]}
    obj["rng_seed"] = ctx.seed
    return _build("degrade", DegradationSpec.from_json, obj)


def stage_degrade(ctx: Context) -> dict | None:
    spec = _degradation_spec(ctx)
    seed = _load_corpus(ctx, "seed_corpus", "seed_corpus", Source.SEED)
    if ctx.dry_run:
        return None
    crawl, manifest = degrade(seed, spec)
    write_corpus(crawl, ctx.out / CRAWL)
    manifest.write(ctx.out / MANIFEST)
    by_class = Counter(e.error_class for e in manifest.entries)
    rep = {"records": len(crawl), "degraded_records": len(manifest.degraded_ids()),
           "entries_by_class": {c: by_class.get(c, 0) for c in sorted(spec.error_classes)},
           "skipped_no_site": {c: manifest.skipped.get(c, 0) for c in sorted(spec.error_classes)},
           "spec": spec.to_json(), "notes": []}
    if all(r == DEFAULT_RATE for r in spec.rates.values()):
        rep["notes"].append(f"degradation rates are the arbitrary default {DEFAULT_RATE} per enabled class")
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["degrade"])
    return rep


def _match_config(ctx: Context) -> MatchConfig:
    return _build("match", MatchConfig,
                  answer_match_mode=ctx.get("mode", "match.answer_match_mode", "subsequence"),
                  min_answer_len=ctx.get("min_answer_len", "match.min_answer_len", 8),
                  dedup=ctx.get("dedup", "match.dedup", "one-per-crawl"),
                  workers=ctx.workers)


def stage_match(ctx: Context) -> dict | None:
    config = _match_config(ctx)
    seed = _load_corpus(ctx, "seed_corpus", "seed_corpus", Source.SEED)
    crawl = _load_corpus(ctx, "crawl_corpus", "crawl_corpus", Source.CRAWL)
    if ctx.dry_run:
        return None
    pairs = match_pairs(seed, crawl, config)
    write_pairs(pairs, ctx.out / PAIRS)
    rep = {**pairs.summary(), **pair_rate_summary(pairs.seed_total, len(pairs.pairs)),
           "notes": [f"dedup policy '{config.dedup.value}' is a local choice; "
                     f"seed answers shorter than {config.min_answer_len} normalized chars "
                     "are excluded from answer matching"]}
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["match"])
    print(f"pairs {rep['pairs']} / seed {rep['seed_total']} -> pair_rate {rep['pair_rate_pct']}")
    return rep


def stage_rule_clean(ctx: Context) -> dict | None:
    rules_path = ctx.get("rules", "rules")
    if rules_path is not None and not Path(rules_path).exists():
        raise ConfigError("rules", f"path does not exist: {rules_path}")
    registry = _build("rules", RuleRegistry.load, rules_path) if rules_path else DEFAULT_REGISTRY
    crawl = _load_corpus(ctx, "crawl_corpus", "crawl_corpus", Source.CRAWL)
    if ctx.dry_run:
        return None
    cleaned, changes = [], []
    for rec in crawl:
        out, cs = clean(rec, registry)
        cleaned.append(out)
        changes.append(cs)
    write_corpus(cleaned, ctx.out / RULE_CLEANED)
    with (ctx.out / CHANGESETS).open("w", encoding="utf-8") as fh:
        for cs in changes:
            fh.write(json.dumps(cs.to_json(), ensure_ascii=False) + "\n")
    by_rule = Counter(e.rule_id for cs in changes for e in cs.edits)
    rep = {"records": len(cleaned), "changed": sum(bool(cs) for cs in changes),
           "edits_by_rule": dict(sorted(by_rule.items()))}
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["rule_clean"])
    return rep


def stage_emit_pairs(ctx: Context) -> dict | None:
    layout = ctx.get("layout", "train.layout", "flat")
    if layout not in ("flat", "chat"):
        raise ConfigError("train.layout", f"unknown layout {layout!r}")
    aug = _build("augmentation", AugmentationConfig,
                 count=ctx.get("aug_count", "augmentation.count"),
                 ratio=ctx.get("aug_ratio", "augmentation.ratio", 0.02),
                 rng_seed=ctx.seed,
                 rounds=ctx.get("aug_rounds", "augmentation.rounds", 3))
    seed = _load_corpus(ctx, "seed_corpus", "seed_corpus", Source.SEED)
    crawl = _load_corpus(ctx, "crawl_corpus", "crawl_corpus", Source.CRAWL)
    pairs_path = ctx.path("pairs", "pairs", PAIRS, must_exist=not ctx.dry_run)
    if ctx.dry_run:
        return None
    pairs = read_pairs(pairs_path)
    try:
        examples = build_training_set(pairs, seed, crawl, aug)
    except (CorpusError, ValueError) as exc:
        raise ConfigError("pairs", str(exc)) from exc
    write_training_set(examples, ctx.out / TRAIN, layout)
    labels = Counter(e.label.value for e in examples)
    rep = {"examples": len(examples), "pairs": len(pairs), "labels": dict(sorted(labels.items())),
           "layout": layout, "augmentation_rounds": aug.rounds}
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["emit_pairs"])
    return rep


def _endpoint(ctx: Context) -> EndpointConfig:
    cfg = dict(ctx.config.get("endpoint", {}))
    flags = {"base_url": "base_url", "model": "model_name", "max_concurrency": "max_concurrency",
             "rpm": "requests_per_minute", "timeout": "timeout", "max_retries": "max_retries",
             "api_key_env": "api_key_env", "temperature": "temperature"}
    for attr, key in flags.items():
        val = getattr(ctx.args, attr, None)
        if val is not None:
            cfg[key] = val
    if not cfg.get("base_url"):
        raise ConfigError("endpoint.base_url", "required for the rewrite stage")
    return _build("endpoint", EndpointConfig, **cfg)


def stage_rewrite(ctx: Context) -> dict | None:
    endpoint = _endpoint(ctx)
    mode = ctx.get("prompt_mode", "rewrite.prompt_mode", "sft")
    if mode not in ("sft", "one_shot"):
        raise ConfigError("rewrite.prompt_mode", f"unknown mode {mode!r}")
    crawl = _load_corpus(ctx, "crawl_corpus", "crawl_corpus", Source.CRAWL)
    if ctx.dry_run:
        return None
    try:
        with RewriteClient(endpoint) as client:
            result = client.rewrite_corpus(crawl, ctx.out / CHECKPOINT, mode)
    except RewriteError as exc:
        raise ConfigError("endpoint", str(exc)) from exc
    write_outputs(result.outputs, ctx.out / OUTPUTS)
    rep = result.summary()
    rep.pop("resumed_from_checkpoint")  # varies between fresh and resumed runs
    rep.pop("http_attempts")
    rep["prompt_mode"] = mode
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["rewrite"])
    return rep


def stage_assemble(ctx: Context) -> dict | None:
    outputs_path = ctx.path("outputs", "outputs", OUTPUTS, must_exist=not ctx.dry_run)
    if ctx.dry_run:
        return None
    cleaned, status = assemble_cleaned(read_outputs(outputs_path), str(outputs_path))
    write_corpus(cleaned, ctx.out / CLEANED)
    rep = {"cleaned": len(cleaned), "status": status}
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["assemble"])
    return rep


def stage_evaluate(ctx: Context) -> dict | None:
    tol = ctx.get("tol", "evaluate.tol", 1e-6)
    if not isinstance(tol, (int, float)) or tol < 0:
        raise ConfigError("evaluate.tol", "must be a non-negative number")
    preds = ctx.path("predictions", "evaluate.predictions")
    gold = _load_corpus(ctx, "gold", "evaluate.gold", Source.SEED)
    if ctx.dry_run:
        return None
    try:
        result = grade_dataset(preds, gold, tol)
    except (ValueError, KeyError) as exc:
        raise ConfigError("evaluate.predictions", f"bad predictions file: {exc}") from exc
    with (ctx.out / VERDICTS).open("w", encoding="utf-8") as fh:
        for v in result.verdicts:
            fh.write(json.dumps(v.to_json(), ensure_ascii=False) + "\n")
    rep = result.to_json(VERDICTS)
    _dump_json(rep, ctx.out / reporting.STAGE_FILES["evaluate"])
    print(result.table())
    return rep


def stage_report(ctx: Context) -> dict | None:
    seed_total = ctx.get("seed_total", "report.seed_total")
    pairs = ctx.get("pairs_count", "report.pairs")
    if (seed_total is None) != (pairs is None):
        raise ConfigError("report.seed_total" if seed_total is None else "report.pairs",
                          "seed_total and pairs must be given together")
    if seed_total is not None and (seed_total < 0 or pairs < 0):
        raise ConfigError("report.seed_total", "counts must be non-negative")
    if ctx.dry_run:
        return None
    run = reporting.collect(ctx.out)
    run.config_fingerprint = ctx.fingerprint()
    run.timings.update(ctx.timings)
    if seed_total is not None:
        run.counts_override = {"seed_total": seed_total, "pairs": pairs}
    figures = not getattr(ctx.args, "no_figures", False) and ctx.config.get("report", {}).get("figures", True)
    obj = reporting.write_report(run, ctx.out, figures=bool(figures))
    if obj["pair_rate"]:
        pr = obj["pair_rate"]
        print(f"pair_rate {pr['pair_rate_pct']} ({pr['pairs']} / {pr['seed_total']})")
    return obj


PIPELINE = (("match", stage_match), ("emit_pairs", stage_emit_pairs), ("rewrite", stage_rewrite),
            ("assemble", stage_assemble), ("report", stage_report))

COMMANDS: dict[str, Callable[[Context], dict | None]] = {
    "ingest": stage_ingest, "degrade": stage_degrade, "match": stage_match,
    "rule-clean": stage_rule_clean, "emit-pairs": stage_emit_pairs, "rewrite": stage_rewrite,
    "assemble": stage_assemble, "evaluate": stage_evaluate, "report": stage_report,
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="JSON config file; flags override its values")
    g.add_argument("--seed", type=int, help="fixes every random choice (default 0)")
    g.add_argument("--workers", type=int, help="worker pool size for parallel stages")
    g.add_argument("--output-dir", dest="output_dir", help="artifact directory (default: out)")
    g.add_argument("--dry-run", action="store_true", help="validate config and inputs, write nothing")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _add_corpora(p: argparse.ArgumentParser, seed: bool = True, crawl: bool = True) -> None:
    if seed:
        p.add_argument("--seed-corpus", dest="seed_corpus")
    if crawl:
        p.add_argument("--crawl-corpus", dest="crawl_corpus")


def _add_match(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["subsequence", "substring"])
    p.add_argument("--min-answer-len", dest="min_answer_len", type=int)
    p.add_argument("--dedup", choices=["none", "one-per-crawl", "one-per-seed"])


def _add_train(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pairs", help=f"pairs file (default: <output-dir>/{PAIRS})")
    p.add_argument("--layout", choices=["flat", "chat"])
    p.add_argument("--aug-count", dest="aug_count", type=int)
    p.add_argument("--aug-ratio", dest="aug_ratio", type=float)
    p.add_argument("--aug-rounds", dest="aug_rounds", type=int)


def _add_endpoint(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--max-concurrency", dest="max_concurrency", type=int)
    p.add_argument("--rpm", type=int, help="requests per minute")
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--api-key-env", dest="api_key_env", help="environment variable holding the token")
    p.add_argument("--prompt-mode", dest="prompt_mode", choices=["sft", "one_shot"])


def _add_report(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-figures", dest="no_figures", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="mathclean", description="Math Q/A corpus cleaning toolkit.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", parents=[common], help="validate and re-serialize a corpus")
    p.add_argument("--input")
    p.add_argument("--source", choices=[s.value for s in Source])

    p = sub.add_parser("degrade", parents=[common], help="synthesize a noisy corpus from clean records")
    _add_corpora(p, crawl=False)
    p.add_argument("--spec", help="degradation spec JSON")
    p.add_argument("--classes", help="comma-separated error classes")
    p.add_argument("--rate", type=float, help="probability applied to every enabled class")

    p = sub.add_parser("match", parents=[common], help="pair crawl records with seed records")
    _add_corpora(p)
    _add_match(p)

    p = sub.add_parser("rule-clean", parents=[common], help="rule-based cleaning baseline")
    _add_corpora(p, seed=False)
    p.add_argument("--rules", help="rule registry JSON")

    p = sub.add_parser("emit-pairs", parents=[common], help="write the rewriter training set")
    _add_corpora(p)
    _add_train(p)

    p = sub.add_parser("rewrite", parents=[common], help="run the rewriter endpoint over a crawl corpus")
    _add_corpora(p, seed=False)
    _add_endpoint(p)

    p = sub.add_parser("assemble", parents=[common], help="build the cleaned corpus from rewrite outputs")
    p.add_argument("--outputs", help=f"rewrite outputs or checkpoint (default: <output-dir>/{OUTPUTS})")

    p = sub.add_parser("evaluate", parents=[common], help="grade predictions against gold answers")
    p.add_argument("--predictions")
    p.add_argument("--gold")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("report", parents=[common], help="summarize stage reports, write figures")
    p.add_argument("--seed-total", dest="seed_total", type=int)
    p.add_argument("--pairs", dest="pairs_count", type=int)
    _add_report(p)

    p = sub.add_parser("pipeline", parents=[common], help="match, emit-pairs, rewrite, assemble, report")
    _add_corpora(p)
    _add_match(p)
    _add_train(p)
    _add_endpoint(p)
    _add_report(p)
    return ap


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError("config", f"path does not exist: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a JSON object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown config key")
    return cfg


def _int_setting(ctx_args, cfg: dict, attr: str, default: int, minimum: int) -> int:
    val = getattr(ctx_args, attr, None)
    if val is None:
        val = cfg.get(attr, default)
    if not isinstance(val, int) or val < minimum:
        raise ConfigError(attr, f"must be an integer >= {minimum}")
    return val


def _run(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    out = Path(args.output_dir or cfg.get("output_dir") or "out")
    ctx = Context(args, cfg, out, args.dry_run,
                  seed=_int_setting(args, cfg, "seed", 0, 0),
                  workers=_int_setting(args, cfg, "workers", 1, 1))
    if out.exists() and not out.is_dir():
        raise ConfigError("output_dir", f"not a directory: {out}")
    if not ctx.dry_run:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("output_dir", str(exc)) from exc

    stages = PIPELINE if args.command == "pipeline" else ((args.command, COMMANDS[args.command]),)
    if args.command == "pipeline" and ctx.dry_run:
        # validate every stage's settings up front
        for name, fn in stages:
            fn(ctx)
        print("dry run: configuration and inputs are valid")
        return 0
    for name, fn in stages:
        t0 = time.perf_counter()
        fn(ctx)
        ctx.timings[name.replace("-", "_")] = time.perf_counter() - t0
        logger.info("%s done in %.2fs", name, ctx.timings[name.replace("-", "_")])
    if ctx.dry_run:
        print("dry run: configuration and inputs are valid")
    elif args.command not in ("report", "pipeline"):
        for name, secs in ctx.timings.items():
            reporting.record_timing(out, name, secs, ctx.fingerprint())
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
