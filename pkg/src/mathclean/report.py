"""Run statistics: collect per-stage counters, write report.json / report.tsv and figures.

Stage counters are deterministic and go into the TSV and figures; wall-clock
timings and the creation timestamp live only in ``report.json``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .matcher import pair_rate_summary  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_TSV = "report.tsv"

# stage name -> report file written by that stage
STAGE_FILES = {
    "ingest": "ingest_report.json",
    "degrade": "degrade_report.json",
    "match": "match_report.json",
    "rule_clean": "rule_clean_report.json",
    "emit_pairs": "train_report.json",
    "rewrite": "rewrite_report.json",
    "assemble": "assemble_report.json",
    "evaluate": "eval_report.json",
}


def config_fingerprint(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, ensure_ascii=False).encode()).hexdigest()


@dataclass
class RunReport:
    stages: dict[str, dict] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    config_fingerprint: str = ""
    notes: list[str] = field(default_factory=list)
    counts_override: dict | None = None  # seed_total/pairs fed directly

    def pair_rate(self) -> dict | None:
        if self.counts_override is not None:
            return pair_rate_summary(self.counts_override["seed_total"], self.counts_override["pairs"])
        match = self.stages.get("match")
        if not match:
            return None
        return pair_rate_summary(match["seed_total"], match["pairs"])

    def check_consistency(self) -> list[str]:
        """Return violated counter relations (empty when consistent)."""
        problems = []
        match, rewrite, assemble = (self.stages.get(k) for k in ("match", "rewrite", "assemble"))
        if match and match["pairs"] > match["crawl_total"] and match.get("dedup") != "none":
            problems.append("match: more pairs than crawl records under dedup")
        if rewrite and match and rewrite["outputs"] > match["crawl_total"]:
            problems.append("rewrite: more outputs than crawl records")
        if assemble and rewrite and assemble["cleaned"] > rewrite["outputs"]:
            problems.append("assemble: more cleaned records than rewrite outputs")
        return problems

    def rows(self) -> list[tuple[str, str, str]]:
        """Flattened (stage, key, value) rows over deterministic counters."""
        out = []

        def walk(stage: str, prefix: str, obj) -> None:
            if isinstance(obj, dict):
                for k in sorted(obj):
                    walk(stage, f"{prefix}.{k}" if prefix else str(k), obj[k])
            elif isinstance(obj, list):
                out.append((stage, prefix, ",".join(map(str, obj))))
            else:
                out.append((stage, prefix, _fmt(obj)))

        for stage in sorted(self.stages):
            walk(stage, "", self.stages[stage])
        rate = self.pair_rate()
        if rate:
            walk("pair_rate", "", rate)
        return out

    def to_json(self, created_at: str | None = None) -> dict:
        return {
            "stages": {k: self.stages[k] for k in sorted(self.stages)},
            "pair_rate": self.pair_rate(),
            "consistency_problems": self.check_consistency(),
            "timings": {k: round(v, 4) for k, v in sorted(self.timings.items())},
            "config_fingerprint": self.config_fingerprint,
            "created_at": created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "notes": list(self.notes),
        }


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    if v is None:
        return ""
    return str(v)


def collect(out_dir: str | Path) -> RunReport:
    """Build a report from whatever stage reports exist in ``out_dir``."""
    out = Path(out_dir)
    report = RunReport()
    for stage, name in STAGE_FILES.items():
        path = out / name
        if path.exists():
            report.stages[stage] = json.loads(path.read_text(encoding="utf-8"))
    prior = out / REPORT_JSON
    if prior.exists():
        old = json.loads(prior.read_text(encoding="utf-8"))
        report.timings.update(old.get("timings", {}))
        report.config_fingerprint = old.get("config_fingerprint", "")
    for stage in report.stages.values():
        report.notes.extend(stage.get("notes", []))
    return report


def record_timing(out_dir: str | Path, stage: str, seconds: float, fingerprint: str = "") -> None:
    """Merge one stage timing into ``report.json`` (the only file that holds timings)."""
    path = Path(out_dir) / REPORT_JSON
    obj = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    obj.setdefault("stages", {})
    obj.setdefault("pair_rate", None)
    obj.setdefault("timings", {})[stage] = round(seconds, 4)
    obj["config_fingerprint"] = fingerprint or obj.get("config_fingerprint", "")
    obj["created_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_tsv(report: RunReport, path: str | Path) -> None:
    lines = ["stage\tkey\tvalue"] + ["\t".join(r) for r in report.rows()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _bar(ax, labels: list[str], values: list[float], title: str, ylabel: str) -> None:
    ax.bar(range(len(labels)), values, color="#4c72b0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    for i, v in enumerate(values):
        ax.annotate(_fmt(v) if isinstance(v, float) and v % 1 else str(int(v)), (i, v),
                    ha="center", va="bottom", fontsize=8)


def _save(fig, path: Path) -> None:
    # no Software/date metadata so reruns are byte-identical
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)


def render_figures(report: RunReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    written = []
    match = report.stages.get("match")
    if match:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        reasons = match["reasons"]
        _bar(ax, list(reasons), [float(v) for v in reasons.values()],
             f"pairs by reason (rate {report.pair_rate()['pair_rate_pct']})", "pairs")
        fig.tight_layout()
        _save(fig, out / "pair_reasons.png")
        written.append(out / "pair_reasons.png")
    status = (report.stages.get("assemble") or {}).get("status") or (report.stages.get("rewrite") or {}).get("status")
    if status:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        _bar(ax, list(status), [float(v) for v in status.values()], "rewrite outputs by status", "records")
        fig.tight_layout()
        _save(fig, out / "status_counts.png")
        written.append(out / "status_counts.png")
    per_grade = (report.stages.get("evaluate") or {}).get("per_grade")
    if per_grade:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        _bar(ax, list(per_grade), [round(g["accuracy"], 3) for g in per_grade.values()],
             "accuracy by grade", "accuracy")
        ax.set_ylim(0, 1.1)
        fig.tight_layout()
        _save(fig, out / "eval_per_grade.png")
        written.append(out / "eval_per_grade.png")
    return written


def write_report(report: RunReport, out_dir: str | Path, figures: bool = True) -> dict:
    out = Path(out_dir)
    obj = report.to_json()
    (out / REPORT_JSON).write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    write_tsv(report, out / REPORT_TSV)
    if figures:
        for p in render_figures(report, out):
            logger.info("wrote %s", p)
    for problem in obj["consistency_problems"]:
        logger.warning("report: %s", problem)
    return obj
