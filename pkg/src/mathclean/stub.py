"""A local chat-completions stub for exercising the rewrite client.

Run ``python -m mathclean.stub --seed-corpus s.jsonl --crawl-corpus c.jsonl``
to serve the oracle rewriter: each crawl prompt is answered with the
formatted seed record sharing its id (or linked through ``--pairs``).
"""

from __future__ import annotations

import argparse
import json
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping

from . import prompts
from .corpus import Corpus, Source, ingest
from .sftgen import render_prompt, render_target

FaultPlan = Callable[[str, int], "int | None"]


class StubServer:
    """Threaded HTTP stub.

    ``responses`` maps prompt text to the reply; unknown prompts get
    ``default``. ``fault_plan(prompt, attempt)`` may return an HTTP status
    to fail that attempt (attempts count from 1 per prompt).
    """

    def __init__(self, responses: Mapping[str, str] | None = None, default: str = "garbage with no markers",
                 fault_plan: FaultPlan | None = None, delay: float = 0.0,
                 prompt_ids: Mapping[str, str] | None = None, host: str = "127.0.0.1", port: int = 0):
        self.responses = dict(responses or {})
        self.default = default
        self.fault_plan = fault_plan
        self.delay = delay
        self.prompt_ids = dict(prompt_ids or {})
        self.counts: Counter = Counter()
        self.successes: Counter = Counter()
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler())
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @classmethod
    def oracle(cls, seed: Corpus, crawl: Corpus, links: Mapping[str, str] | None = None,
               unmatched: str = prompts.SYNTAX_ERROR, **kwargs) -> "StubServer":
        """Answer each crawl prompt with its linked seed target; ``links`` maps crawl id to
        seed id and defaults to identical ids."""
        seeds = seed.by_id()
        responses, ids = {}, {}
        for rec in crawl:
            prompt = render_prompt(rec)
            ids[prompt] = rec.id
            sid = links.get(rec.id) if links is not None else rec.id
            responses[prompt] = render_target(seeds[sid]) if sid in seeds else unmatched
        return cls(responses, default=unmatched, prompt_ids=ids, **kwargs)

    def key(self, prompt: str) -> str:
        return self.prompt_ids.get(prompt, prompt)

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def _send(self, status: int, obj: dict) -> None:
                body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self) -> None:
                if self.path.rstrip("/") in ("/v1/models", "/health"):
                    self._send(200, {"object": "list", "data": [{"id": "stub"}]})
                else:
                    self._send(404, {"error": "not found"})

            def do_POST(self) -> None:
                if self.path.rstrip("/") != "/v1/chat/completions":
                    self._send(404, {"error": "not found"})
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length))
                    prompt = body["messages"][-1]["content"]
                except (ValueError, KeyError, IndexError, TypeError):
                    self._send(400, {"error": "bad request"})
                    return
                with stub._lock:
                    stub.counts[stub.key(prompt)] += 1
                    attempt = stub.counts[stub.key(prompt)]
                    stub.requests.append(body)
                if stub.delay:
                    time.sleep(stub.delay)
                status = stub.fault_plan(prompt, attempt) if stub.fault_plan else None
                if status:
                    self._send(status, {"error": f"injected {status}"})
                    return
                with stub._lock:
                    stub.successes[stub.key(prompt)] += 1
                content = stub.responses.get(prompt, stub.default)
                self._send(200, {
                    "id": f"stub-{attempt}", "object": "chat.completion", "model": body.get("model"),
                    "choices": [{"index": 0, "finish_reason": "stop",
                                 "message": {"role": "assistant", "content": content}}],
                })

        return Handler

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join()

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m mathclean.stub", description=__doc__.splitlines()[0])
    ap.add_argument("--seed-corpus", required=True)
    ap.add_argument("--crawl-corpus", required=True)
    ap.add_argument("--pairs", help="pairs JSONL linking crawl ids to seed ids (default: identical ids)")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    args = ap.parse_args(argv)
    seed = ingest(args.seed_corpus, Source.SEED)
    crawl = ingest(args.crawl_corpus, Source.CRAWL)
    links = None
    if args.pairs:
        with open(args.pairs, encoding="utf-8") as fh:
            links = {o["crawl_id"]: o["seed_id"] for o in (json.loads(l) for l in fh if l.strip())}
    server = StubServer.oracle(seed, crawl, links, host=args.host, port=args.port)
    print(f"serving oracle stub on {server.url}", flush=True)
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
