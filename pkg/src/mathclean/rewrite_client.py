"""Drive a chat-completions endpoint over a crawl corpus, resumably.

Responses are appended to a JSONL checkpoint (``{"crawl_id", "raw"}``) and
flushed to disk before a record counts as done. A sidecar
``<checkpoint>.meta.json`` holds the run fingerprint; resuming against a
different model, template or corpus is refused. A finished run rewrites the
checkpoint in crawl-id order so it does not depend on completion order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import Counter
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import httpx

from . import prompts
from .corpus import Corpus, Record, Source, dump_records
from .sftgen import RewriteOutput, Status, extract_output, render_prompt

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


class RewriteError(RuntimeError):
    pass


class FingerprintMismatch(RewriteError):
    pass


class RunInterrupted(RewriteError):
    """Raised by the ``stop_after`` hook to simulate a crash."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str = "rewriter"
    max_concurrency: int = 4
    requests_per_minute: int = 600
    timeout: float = 60.0
    max_retries: int = 5
    temperature: float = 0.0
    api_key_env: str | None = None
    backoff_base: float = 0.5
    backoff_max: float = 30.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("endpoint.base_url: required")
        if self.max_concurrency < 1:
            raise ValueError("endpoint.max_concurrency: must be >= 1")
        if self.requests_per_minute < 1:
            raise ValueError("endpoint.requests_per_minute: must be >= 1")
        if self.timeout <= 0:
            raise ValueError("endpoint.timeout: must be > 0")
        if self.max_retries < 0:
            raise ValueError("endpoint.max_retries: must be >= 0")
        if self.temperature < 0:
            raise ValueError("endpoint.temperature: must be >= 0")

    def fingerprint_fields(self) -> dict:
        # the host may move between runs; secrets never enter the fingerprint
        return {"model_name": self.model_name, "temperature": self.temperature}


class TokenBucket:
    """Thread-safe limiter allowing ``rate_per_minute`` acquisitions per minute."""

    def __init__(self, rate_per_minute: int, burst: int | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = rate_per_minute / 60.0
        self.capacity = float(burst if burst is not None else max(1, min(rate_per_minute, 10)))
        self.tokens = self.capacity
        self._clock, self._sleep = clock, sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait_s = (1.0 - self.tokens) / self.rate
            self._sleep(wait_s)


def corpus_digest(corpus: Corpus) -> str:
    return hashlib.sha256(dump_records(corpus).encode("utf-8")).hexdigest()


def run_fingerprint(endpoint: EndpointConfig, crawl: Corpus, mode: str = "sft") -> str:
    payload = {"endpoint": endpoint.fingerprint_fields(), "template": prompts.TEMPLATE_VERSION,
               "prompt_mode": mode, "corpus": corpus_digest(crawl)}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class CheckpointStore:
    """Append-only JSONL of raw responses; the single writer is guarded by a lock."""

    def __init__(self, path: str | Path, fingerprint: str):
        self.path = Path(path)
        self.meta_path = self.path.with_name(self.path.name + ".meta.json")
        self.fingerprint = fingerprint
        self._lock = threading.Lock()
        self.completed: dict[str, str] = {}
        if self.meta_path.exists():
            stored = json.loads(self.meta_path.read_text(encoding="utf-8")).get("fingerprint")
            if stored != fingerprint:
                raise FingerprintMismatch(
                    f"checkpoint {self.path} belongs to a different run "
                    f"(fingerprint {stored!s:.12} != {fingerprint:.12}); "
                    "the endpoint, prompt template or input corpus changed. "
                    "Use a fresh checkpoint path to start over.")
        elif self.path.exists() and self.path.stat().st_size:
            raise FingerprintMismatch(f"checkpoint {self.path} has no fingerprint sidecar; refusing to resume")
        else:
            self.meta_path.write_text(json.dumps({"fingerprint": fingerprint}) + "\n", encoding="utf-8")
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            # torn final line from a crash mid-write; drop it so appends stay aligned
            logger.warning("%s: dropping truncated final checkpoint line", self.path)
            with self.path.open("r+b") as fh:
                fh.truncate(data.rfind(b"\n") + 1)
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                self.completed[obj["crawl_id"]] = obj["raw"]

    def append(self, crawl_id: str, raw: str) -> None:
        line = json.dumps({"crawl_id": crawl_id, "raw": raw}, ensure_ascii=False) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
            self.completed[crawl_id] = raw

    def compact(self) -> None:
        """Rewrite the checkpoint in crawl-id order (atomic replace)."""
        tmp = self.path.with_name(self.path.name + ".tmp")
        with self._lock:
            with tmp.open("w", encoding="utf-8") as fh:
                for cid in sorted(self.completed):
                    fh.write(json.dumps({"crawl_id": cid, "raw": self.completed[cid]}, ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)


@dataclass
class RewriteResult:
    outputs: list[RewriteOutput]
    failed: dict[str, str] = field(default_factory=dict)
    resumed: int = 0
    requested: int = 0
    attempts: int = 0

    def status_counts(self) -> dict[str, int]:
        counts = Counter(o.status.value for o in self.outputs)
        out = {s.value: counts.get(s.value, 0) for s in Status}
        out["failed"] = len(self.failed)
        return out

    def summary(self) -> dict:
        return {"outputs": len(self.outputs), "resumed_from_checkpoint": self.resumed,
                "requested": self.requested, "http_attempts": self.attempts,
                "status": self.status_counts(), "failed_ids": sorted(self.failed)}


class _Transient(Exception):
    pass


class RewriteClient:
    def __init__(self, endpoint: EndpointConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        headers = {}
        if endpoint.api_key_env:
            token = os.environ.get(endpoint.api_key_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(base_url=endpoint.base_url.rstrip("/"), timeout=endpoint.timeout,
                                  headers=headers, transport=transport)
        self._bucket = TokenBucket(endpoint.requests_per_minute)
        self._sleep = sleep
        self._attempts = 0
        self._attempt_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "RewriteClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def health_check(self) -> None:
        try:
            resp = self._http.get("/v1/models")
        except httpx.HTTPError as exc:
            raise RewriteError(f"endpoint {self.endpoint.base_url} unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise RewriteError(f"endpoint {self.endpoint.base_url} unhealthy: HTTP {resp.status_code}")

    def _post_once(self, content: str) -> str:
        body = {"model": self.endpoint.model_name,
                "messages": [{"role": "user", "content": content}],
                "temperature": self.endpoint.temperature}
        self._bucket.acquire()
        with self._attempt_lock:
            self._attempts += 1
        try:
            resp = self._http.post("/v1/chat/completions", json=body)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise _Transient(str(exc)) from exc
        if resp.status_code in RETRYABLE_STATUS:
            raise _Transient(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise RewriteError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RewriteError(f"unexpected response body: {resp.text[:200]}") from exc

    def complete(self, content: str, rng: random.Random | None = None) -> str:
        """One chat completion with exponential backoff on transient failures."""
        rng = rng or random.Random(0)
        delay = self.endpoint.backoff_base
        for attempt in range(self.endpoint.max_retries + 1):
            try:
                return self._post_once(content)
            except _Transient as exc:
                if attempt == self.endpoint.max_retries:
                    raise RewriteError(f"retries exhausted: {exc}") from exc
                logger.info("transient failure (%s); retry %d in %.2fs", exc, attempt + 1, delay)
                self._sleep(delay * (0.5 + rng.random() / 2))
                delay = min(delay * 2, self.endpoint.backoff_max)
        raise AssertionError("unreachable")

    def rewrite_corpus(self, crawl: Corpus, checkpoint_path: str | Path, mode: str = "sft",
                       stop_after: int | None = None) -> RewriteResult:
        """Rewrite every record not already in the checkpoint.

        ``stop_after`` raises :class:`RunInterrupted` once that many new
        responses have been persisted (crash injection for tests).
        """
        store = CheckpointStore(checkpoint_path, run_fingerprint(self.endpoint, crawl, mode))
        self.health_check()
        pending = [r for r in crawl if r.id not in store.completed]
        result = RewriteResult([], resumed=len(crawl) - len(pending), requested=len(pending))
        persisted = 0

        def work(rec: Record) -> tuple[str, str]:
            return rec.id, self.complete(render_prompt(rec, mode), random.Random(rec.id))

        with ThreadPoolExecutor(self.endpoint.max_concurrency) as pool:
            queue = iter(pending)
            running = set()

            def top_up() -> None:
                while len(running) < self.endpoint.max_concurrency:
                    rec = next(queue, None)
                    if rec is None:
                        return
                    fut = pool.submit(work, rec)
                    fut.rec_id = rec.id  # type: ignore[attr-defined]
                    running.add(fut)

            top_up()
            while running:
                done, _ = wait(running, return_when=FIRST_COMPLETED)
                for fut in done:
                    running.discard(fut)
                    try:
                        cid, raw = fut.result()
                    except RewriteError as exc:
                        result.failed[fut.rec_id] = str(exc)  # type: ignore[attr-defined]
                        logger.warning("record %s failed: %s", fut.rec_id, exc)  # type: ignore[attr-defined]
                        continue
                    store.append(cid, raw)
                    persisted += 1
                    if stop_after is not None and persisted >= stop_after:
                        for f in running:
                            f.cancel()
                        raise RunInterrupted(f"stopped after {persisted} persisted responses")
                top_up()

        result.attempts = self._attempts
        store.compact()
        order = sorted(r.id for r in crawl if r.id in store.completed)
        result.outputs = [extract_output(store.completed[cid], cid) for cid in order]
        return result


def rewrite_corpus(crawl: Corpus, endpoint: EndpointConfig, checkpoint_path: str | Path,
                   mode: str = "sft", **kwargs) -> RewriteResult:
    with RewriteClient(endpoint) as client:
        return client.rewrite_corpus(crawl, checkpoint_path, mode, **kwargs)


def assemble_cleaned(outputs: Iterable[RewriteOutput], provenance: str = "") -> tuple[Corpus, dict[str, int]]:
    """Keep status-ok outputs as ``cleaned:<crawl id>`` records; return them with per-status counts."""
    records = []
    counts = Counter()
    for out in outputs:
        counts[out.status.value] += 1
        if out.status is Status.OK and out.parsed:
            q, a = out.parsed
            records.append(Record(f"cleaned:{out.crawl_id}", q, a, Source.CLEANED))
    report = {s.value: counts.get(s.value, 0) for s in Status}
    return Corpus(tuple(records), provenance), report


def write_outputs(outputs: Iterable[RewriteOutput], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for o in outputs:
            fh.write(json.dumps(o.to_json(), ensure_ascii=False) + "\n")


def read_outputs(path: str | Path) -> list[RewriteOutput]:
    """Read outputs written by :func:`write_outputs` or a raw checkpoint file."""
    outs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                outs.append(extract_output(obj["raw"], obj["crawl_id"]))
    return outs


__all__ = ["EndpointConfig", "RewriteClient", "RewriteResult", "CheckpointStore", "TokenBucket",
           "rewrite_corpus", "assemble_cleaned", "write_outputs", "read_outputs",
           "FingerprintMismatch", "RewriteError", "RunInterrupted"]
