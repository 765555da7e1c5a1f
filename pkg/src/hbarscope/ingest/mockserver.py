"""In-process mirror-node stand-in for tests and offline demos.

Serves ``/api/v1/transactions`` and ``/api/v1/balances`` with the mirror
node's query conventions (``timestamp=gte:...``, ``limit``, ``links.next``).
Failures are scripted: ``script`` is a queue of HTTP statuses returned before
normal service resumes, and ``outage_after`` makes every request after that
many successful pages fail with 503 until cleared.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlencode, urlparse

from ..model import Transaction, format_timestamp, parse_account_id, parse_timestamp
from .records import snapshot_to_dict, transaction_to_dict

MAX_LIMIT = 100


def _bounds(values):
    lo, lo_strict, hi, hi_strict = None, False, None, False
    for v in values:
        op, _, ts = v.partition(":")
        if not ts:
            op, ts = "eq", op
        t = parse_timestamp(ts)
        if op in ("gt", "gte"):
            lo, lo_strict = t, op == "gt"
        elif op in ("lt", "lte"):
            hi, hi_strict = t, op == "lt"
        elif op == "eq":
            lo, hi, lo_strict, hi_strict = t, t, False, False
    return lo, lo_strict, hi, hi_strict


def _within(t, lo, lo_strict, hi, hi_strict):
    if lo is not None and (t < lo or (lo_strict and t == lo)):
        return False
    if hi is not None and (t > hi or (hi_strict and t == hi)):
        return False
    return True


class MockMirrorNode:
    def __init__(self, transactions=(), snapshots=(), script=(), outage_after: int | None = None,
                 max_limit: int = MAX_LIMIT):
        self.records = sorted(
            (transaction_to_dict(t) if isinstance(t, Transaction) else dict(t) for t in transactions),
            key=lambda r: parse_timestamp(r["consensus_timestamp"]))
        self.snapshots = sorted(snapshots, key=lambda s: s.timestamp)
        self.script = deque(script)
        self.outage_after = outage_after
        self.max_limit = max_limit
        self.pages_served = 0
        self.log: list[tuple[float, str, int]] = []
        self._lock = threading.Lock()
        self._server = None
        self._thread = None

    # -- lifecycle ------------------------------------------------------------
    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                status, body = mock.handle(self.path)
                payload = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def request_times(self) -> list[float]:
        return [t for t, _, _ in self.log]

    # -- routing --------------------------------------------------------------
    def handle(self, raw_path: str):
        with self._lock:
            parsed = urlparse(raw_path)
            status, body = self._route(parsed.path, parse_qs(parsed.query))
            self.log.append((time.monotonic(), raw_path, status))
            return status, body

    def _route(self, path, query):
        if self.script:
            status = self.script.popleft()
            return status, {"_status": {"messages": [{"message": f"scripted {status}"}]}}
        if self.outage_after is not None and self.pages_served >= self.outage_after:
            return 503, {"_status": {"messages": [{"message": "outage"}]}}
        if path == "/api/v1/transactions":
            self.pages_served += 1
            return 200, self._transactions(query)
        if path == "/api/v1/balances":
            self.pages_served += 1
            return 200, self._balances(query)
        return 404, {"_status": {"messages": [{"message": "Not found"}]}}

    def _transactions(self, query):
        lo, lo_s, hi, hi_s = _bounds(query.get("timestamp", []))
        limit = min(int(query.get("limit", [self.max_limit])[0]), self.max_limit)
        matching = [r for r in self.records
                    if _within(parse_timestamp(r["consensus_timestamp"]), lo, lo_s, hi, hi_s)]
        page = matching[:limit]
        link = None
        if len(matching) > limit:
            params = [("timestamp", f"gt:{page[-1]['consensus_timestamp']}")]
            if hi is not None:
                params.append(("timestamp", f"{'lt' if hi_s else 'lte'}:{format_timestamp(hi)}"))
            params += [("limit", str(limit)), ("order", "asc")]
            link = "/api/v1/transactions?" + urlencode(params)
        return {"transactions": page, "links": {"next": link}}

    def _balances(self, query):
        _, _, hi, _ = _bounds(query.get("timestamp", []))
        limit = min(int(query.get("limit", [self.max_limit])[0]), self.max_limit)
        after = None
        for v in query.get("account.id", []):
            after = parse_account_id(v.partition(":")[2])
        snaps = [s for s in self.snapshots if hi is None or s.timestamp <= hi]
        if not snaps:
            return {"timestamp": None, "balances": [], "links": {"next": None}}
        snap = snaps[-1]
        rows = snapshot_to_dict(snap)["balances"]
        if after is not None:
            rows = [r for r in rows if parse_account_id(r["account"]) > after]
        page = rows[:limit]
        link = None
        if len(rows) > limit:
            params = [("timestamp", f"lte:{format_timestamp(hi)}")] if hi is not None else []
            params += [("account.id", f"gt:{page[-1]['account']}"), ("limit", str(limit))]
            link = "/api/v1/balances?" + urlencode(params)
        return {"timestamp": format_timestamp(snap.timestamp), "balances": page,
                "links": {"next": link}}
