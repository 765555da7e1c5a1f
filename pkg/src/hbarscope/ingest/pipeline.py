"""Resumable windowed ingestion into the local archive.

Windows are fetched by up to ``concurrency`` worker threads; the archive is
written by the calling thread in window order. After every committed page
the writer's position is saved to ``cursor.json`` so a rerun continues
exactly where the last durable page ended.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..errors import IngestionError
from ..model import TimeWindow, format_timestamp, make_windows, parse_timestamp, validate_transaction
from .archive import DEFAULT_RECORD_CAP, ArchiveWriter, append_reject, load_manifest, write_snapshot
from .client import FetchCursor

logger = logging.getLogger(__name__)

CURSOR_FILE = "cursor.json"
_DONE = object()


def _state_path(store) -> Path:
    return Path(store) / CURSOR_FILE


def load_state(store) -> dict | None:
    path = _state_path(store)
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _save_state(store, state: dict):
    path = _state_path(store)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


class _WindowFetch:
    """One window's pages, produced by a worker and drained by the writer."""

    def __init__(self, source, window: TimeWindow, cursor: FetchCursor, stop: threading.Event):
        self.window = window
        self.cursor = cursor
        self.pages: queue.Queue = queue.Queue()
        self._source = source
        self._stop = stop

    def run(self):
        try:
            for page in self._source.iter_pages(self.cursor, self.window):
                self.pages.put(page)
                if self._stop.is_set():
                    break
        except BaseException as exc:  # handed to the writer thread
            self.pages.put(exc)
        finally:
            self.pages.put(_DONE)


def ingest(source, start: int, end: int, store, *, cadence="weekly", anchor: int | None = None,
           record_cap: int = DEFAULT_RECORD_CAP, concurrency: int = 4, strict_zero_sum: bool = False,
           progress=None) -> dict:
    """Fetch ``[start, end)`` from ``source`` into ``store``; returns the manifest.

    Rerunning with the same arguments after an interruption resumes from the
    saved cursor. Raises :class:`IngestionError` (carrying the cursor) when a
    request exhausts its retry budget.
    """
    store = Path(store)
    windows = make_windows(start, end, cadence, anchor)
    state = load_state(store)
    key = {"endpoint": source.endpoint, "start": format_timestamp(start), "end": format_timestamp(end),
           "cadence": str(getattr(cadence, "value", cadence))}
    resume_ts, resume_link = None, None
    if state and state.get("range") == key:
        if state.get("complete"):
            return load_manifest(store)
        resume_ts = parse_timestamp(state["window_start"])
        resume_link = state.get("next_link")
        windows = [w for w in windows if w.start >= resume_ts]
    elif windows:
        store.mkdir(parents=True, exist_ok=True)
        _save_state(store, {"range": key, "complete": False, "next_link": None,
                            "window_start": format_timestamp(windows[0].start), "unbalanced": 0})
    stats = Counter()
    stop = threading.Event()
    writer = ArchiveWriter(store, record_cap)
    try:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            pending = []

            def submit(i):
                w = windows[i]
                cursor = source.cursor()
                if w.start == resume_ts:
                    cursor.next_link = resume_link
                job = _WindowFetch(source, w, cursor, stop)
                pool.submit(job.run)
                pending.append(job)

            for i in range(min(len(windows), max(1, concurrency))):
                submit(i)
            next_i = len(pending)
            while pending:
                job = pending.pop(0)
                _drain(job, writer, store, key, strict_zero_sum, stats, progress)
                if next_i < len(windows):
                    submit(next_i)
                    next_i += 1
    except BaseException:
        stop.set()
        writer.close()
        raise
    writer.close()
    _save_state(store, {"range": key, "complete": True, "window_start": format_timestamp(end),
                        "next_link": "", "unbalanced": stats["unbalanced"]})
    return load_manifest(store)


def _drain(job: _WindowFetch, writer: ArchiveWriter, store, key, strict, stats, progress):
    while True:
        item = job.pages.get()
        if item is _DONE:
            break
        if isinstance(item, BaseException):
            if isinstance(item, IngestionError):
                item.cursor = load_state(store)
            raise item
        for raw, reason in item.rejects:
            append_reject(store, raw, reason)
        last = writer.last_ts
        for tx in item.transactions:
            # a page re-fetched after a crash between commit and cursor save
            if last is not None and tx.consensus_timestamp <= last:
                continue
            writer.append(validate_transaction(tx, strict, stats))
        writer.commit()
        _save_state(store, {"range": key, "complete": False,
                            "window_start": format_timestamp(job.window.start),
                            "next_link": item.next_link,
                            "unbalanced": stats["unbalanced"]})
        if progress:
            progress(job.window, writer.record_count)
    state = {"range": key, "complete": False, "next_link": None,
             "window_start": format_timestamp(job.window.end), "unbalanced": stats["unbalanced"]}
    _save_state(store, state)


def ingest_snapshots(source, timestamps, store) -> list[Path]:
    """Fetch and store one balance snapshot per timestamp."""
    return [write_snapshot(store, source.balances(at)) for at in timestamps]
