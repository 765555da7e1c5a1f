"""Mirror-node REST client and fixture replay.

Both sources expose ``iter_pages(cursor, window)`` and ``balances(at)`` so the
ingestion pipeline does not care where records come from.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator
from urllib.parse import urljoin

import requests

from ..errors import ConfigurationError, IngestionError, SnapshotUnavailableError
from ..model import (
    DEFAULT_EPOCH,
    BalanceSnapshot,
    TimeWindow,
    Transaction,
    format_timestamp,
)
from .records import RecordError, parse_snapshot, parse_transaction

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "HBARSCOPE_MIRROR_URL"
DEFAULT_ENDPOINT = "https://mainnet-public.mirrornode.hedera.com"
TRANSACTIONS_PATH = "/api/v1/transactions"
BALANCES_PATH = "/api/v1/balances"
PAGE_LIMIT = 100
RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


def endpoint_from_env(default: str = DEFAULT_ENDPOINT) -> str:
    return os.environ.get(ENDPOINT_ENV, default)


@dataclass
class FetchCursor:
    """Resumable position in a paginated fetch.

    ``next_link`` is None before the first request, a server-supplied
    continuation while pages remain, and ``""`` once the stream is exhausted.
    ``retry_budget`` bounds consecutive retries of one request; ``retries``
    counts every retry made so far.
    """

    endpoint: str
    next_link: str | None = None
    retry_budget: int = 8
    retries: int = 0

    @property
    def done(self) -> bool:
        return self.next_link == ""

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Page:
    transactions: list[Transaction]
    next_link: str
    rejects: list[tuple[object, str]] = field(default_factory=list)


class RateLimiter:
    """Spaces request starts at least ``1/rate`` seconds apart. Thread-safe."""

    def __init__(self, rate: float | None, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate else 0.0
        self.clock = clock
        self.sleep = sleep
        self._next = None
        self._lock = threading.Lock()

    def acquire(self):
        if not self.interval:
            return
        with self._lock:
            now = self.clock()
            if self._next is not None and now < self._next:
                self.sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


def backoff_delay(attempt: int, base: float, cap: float, rng: random.Random) -> float:
    """Full-jitter exponential backoff."""
    return rng.uniform(0, min(cap, base * 2**attempt))


def _parse_page_records(raw_records) -> tuple[list[Transaction], list[tuple[object, str]]]:
    good, bad = [], []
    for raw in raw_records:
        try:
            good.append(parse_transaction(raw))
        except RecordError as exc:
            bad.append((raw, str(exc)))
    return good, bad


class MirrorNodeClient:
    def __init__(self, endpoint: str | None = None, rate_limit: float | None = 10.0,
                 retry_budget: int = 8, backoff_base: float = 0.5, backoff_cap: float = 30.0,
                 timeout: float = 30.0, page_limit: int = PAGE_LIMIT,
                 coverage_start: int = DEFAULT_EPOCH, session=None, sleep=time.sleep,
                 seed: int | None = None):
        self.endpoint = (endpoint or endpoint_from_env()).rstrip("/")
        self.limiter = RateLimiter(rate_limit, sleep=sleep)
        self.retry_budget = retry_budget
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self.page_limit = page_limit
        self.coverage_start = coverage_start
        self.session = session or requests.Session()
        self.sleep = sleep
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()

    def cursor(self) -> FetchCursor:
        return FetchCursor(self.endpoint, None, self.retry_budget)

    def _get(self, url: str, cursor: FetchCursor | None = None, params=None) -> dict:
        attempt = 0
        while True:
            self.limiter.acquire()
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout)
                status = resp.status_code
            except requests.RequestException as exc:
                resp, status, reason = None, None, repr(exc)
            else:
                reason = f"HTTP {status}"
                if status == 200:
                    try:
                        return resp.json()
                    except ValueError:
                        raise IngestionError(f"non-JSON response from {url}", cursor) from None
                if status == 404:
                    raise IngestionError(f"{url}: not found", cursor)
                if status not in RETRY_STATUSES:
                    raise IngestionError(f"{url}: {reason}", cursor)
            budget = cursor.retry_budget if cursor else self.retry_budget
            if attempt >= budget:
                raise IngestionError(f"{url}: giving up after {attempt} retries ({reason})", cursor)
            delay = None
            if resp is not None and resp.headers.get("Retry-After", "").isdigit():
                delay = float(resp.headers["Retry-After"])
            if delay is None:
                with self._rng_lock:
                    delay = backoff_delay(attempt, self.backoff_base, self.backoff_cap, self._rng)
            logger.info("retrying %s after %s (%.2fs)", url, reason, delay)
            attempt += 1
            if cursor is not None:
                cursor.retries += 1
            self.sleep(delay)

    def first_url(self, window: TimeWindow) -> str:
        return (f"{self.endpoint}{TRANSACTIONS_PATH}"
                f"?timestamp=gte:{format_timestamp(window.start)}"
                f"&timestamp=lt:{format_timestamp(window.end)}"
                f"&limit={self.page_limit}&order=asc")

    def iter_pages(self, cursor: FetchCursor, window: TimeWindow) -> Iterator[Page]:
        """Follow ``links.next`` from the cursor's position, updating it after each page."""
        if cursor.done:
            return
        url = self.first_url(window) if cursor.next_link is None else urljoin(
            self.endpoint + "/", cursor.next_link)
        while url:
            body = self._get(url, cursor)
            good, bad = _parse_page_records(body.get("transactions") or [])
            good = [tx for tx in good if tx.consensus_timestamp in window]
            link = (body.get("links") or {}).get("next") or ""
            cursor.next_link = link
            yield Page(good, link, bad)
            url = urljoin(self.endpoint + "/", link) if link else None

    def balances(self, at: int) -> BalanceSnapshot:
        if at < self.coverage_start:
            raise SnapshotUnavailableError(format_timestamp(at), "before mirror-node coverage")
        url = (f"{self.endpoint}{BALANCES_PATH}?timestamp=lte:{format_timestamp(at)}"
               f"&limit={self.page_limit}&order=asc")
        rows, served_ts = [], None
        try:
            while url:
                body = self._get(url)
                served_ts = served_ts or body.get("timestamp")
                rows.extend(body.get("balances") or [])
                link = (body.get("links") or {}).get("next")
                url = urljoin(self.endpoint + "/", link) if link else None
        except IngestionError as exc:
            if "not found" in str(exc):
                raise SnapshotUnavailableError(format_timestamp(at), str(exc)) from None
            raise
        if served_ts is None:
            raise SnapshotUnavailableError(format_timestamp(at), "server returned no snapshot")
        return parse_snapshot({"balances": rows}, at=at)


class FixtureSource:
    """Replays mirror-shaped JSON pages or canonical NDJSON files from a directory.

    ``*.json`` files may hold a page (``{"transactions": [...]}``), a bare
    list of records, or a balance snapshot (``{"timestamp", "balances"}``).
    ``*.ndjson`` files hold one record per line.
    """

    def __init__(self, directory, coverage_start: int | None = None):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ConfigurationError(f"fixture directory {self.directory} does not exist")
        self.endpoint = f"fixture:{self.directory}"
        self.coverage_start = coverage_start
        self._tx = None
        self._rejects = None
        self._snapshots = None

    def cursor(self) -> FetchCursor:
        return FetchCursor(self.endpoint)

    def _load(self):
        raw_records, snapshots = [], []
        for path in sorted(self.directory.rglob("*")):
            if path.suffix == ".ndjson":
                raw_records.extend(l for l in path.read_text().splitlines() if l.strip())
            elif path.suffix == ".json":
                body = json.loads(path.read_text())
                if isinstance(body, list):
                    raw_records.extend(body)
                elif "balances" in body:
                    snapshots.append(parse_snapshot(body))
                else:
                    raw_records.extend(body.get("transactions") or [])
        good, bad = _parse_page_records(raw_records)
        self._tx = sorted(good, key=lambda t: t.consensus_timestamp)
        self._rejects = bad
        self._snapshots = sorted(snapshots, key=lambda s: s.timestamp)

    def iter_pages(self, cursor: FetchCursor, window: TimeWindow) -> Iterator[Page]:
        if cursor.done:
            return
        if self._tx is None:
            self._load()
        txs = [tx for tx in self._tx if tx.consensus_timestamp in window]
        rejects, self._rejects = self._rejects, []
        cursor.next_link = ""
        yield Page(txs, "", rejects)

    def balances(self, at: int) -> BalanceSnapshot:
        if self._snapshots is None:
            self._load()
        start = self.coverage_start
        if start is None and self._snapshots:
            start = self._snapshots[0].timestamp
        candidates = [s for s in self._snapshots if s.timestamp <= at]
        if start is None or at < start or not candidates:
            raise SnapshotUnavailableError(format_timestamp(at), "before fixture coverage")
        return BalanceSnapshot(at, candidates[-1].balances)


def make_source(endpoint: str | None = None, fixtures=None, **client_kwargs):
    if fixtures:
        return FixtureSource(fixtures)
    return MirrorNodeClient(endpoint, **client_kwargs)


def fetch_transactions(cursor: FetchCursor, window: TimeWindow, source=None) -> Iterator[Transaction]:
    """Yield transactions in ``window`` in consensus order; ``cursor`` is updated in place."""
    if source is None:
        source = MirrorNodeClient(cursor.endpoint, retry_budget=cursor.retry_budget)
    for page in source.iter_pages(cursor, window):
        yield from page.transactions


def fetch_balances(endpoint, at: int) -> BalanceSnapshot:
    """Snapshot of every nonzero balance at ``at``. ``endpoint`` may be a URL, a fixture dir or a source."""
    if hasattr(endpoint, "balances"):
        return endpoint.balances(at)
    if isinstance(endpoint, Path) or not str(endpoint).startswith(("http://", "https://")):
        return FixtureSource(endpoint).balances(at)
    return MirrorNodeClient(endpoint).balances(at)
