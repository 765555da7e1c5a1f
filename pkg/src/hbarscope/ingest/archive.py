"""Append-only local archive of consensus-ordered transactions.

Layout of a store directory::

    manifest.json           segment list with sha256 checksums
    segment-000000.ndjson   canonical records, at most ``record_cap`` lines each
    balances/<ts>.json      one file per balance snapshot
    rejects.ndjson          records that failed to parse, with the reason

The manifest is rewritten atomically after every commit, so an interrupted
writer can reopen the store, truncate uncommitted bytes and continue.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

from ..errors import DataError, OrderingError
from ..model import BalanceSnapshot, Transaction, format_timestamp, parse_timestamp
from .records import dumps_snapshot, dumps_transaction, parse_snapshot, parse_transaction

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1
DEFAULT_RECORD_CAP = 100_000


@dataclass(frozen=True)
class ArchiveSegment:
    path: str
    first_ts: int
    last_ts: int
    record_count: int
    checksum: str
    size: int

    def to_dict(self):
        d = asdict(self)
        d["first_ts"] = format_timestamp(self.first_ts)
        d["last_ts"] = format_timestamp(self.last_ts)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["path"], parse_timestamp(d["first_ts"]), parse_timestamp(d["last_ts"]),
                   int(d["record_count"]), d["checksum"], int(d["size"]))


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_manifest(store) -> dict:
    path = Path(store) / MANIFEST
    if not path.exists():
        raise DataError(f"no archive manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise DataError(f"unsupported archive manifest version {manifest.get('version')!r}")
    return manifest


def manifest_segments(store) -> list[ArchiveSegment]:
    return [ArchiveSegment.from_dict(s) for s in load_manifest(store)["segments"]]


class ArchiveWriter:
    """Single-consumer writer. Use as a context manager, or call :meth:`close`."""

    def __init__(self, store, record_cap: int = DEFAULT_RECORD_CAP):
        if record_cap < 1:
            raise ValueError("record_cap must be positive")
        self.store = Path(store)
        self.store.mkdir(parents=True, exist_ok=True)
        self.record_cap = record_cap
        self.segments: list[ArchiveSegment] = []
        self._fh = None
        self._hash = None
        self._current = None  # [path, first_ts, last_ts, count, size]
        if (self.store / MANIFEST).exists():
            self._reopen()
        else:
            self._write_manifest()

    @property
    def last_ts(self) -> int | None:
        if self._current is not None:
            return self._current[2]
        return self.segments[-1].last_ts if self.segments else None

    @property
    def record_count(self) -> int:
        n = sum(s.record_count for s in self.segments)
        return n + (self._current[3] if self._current else 0)

    def _reopen(self):
        manifest = load_manifest(self.store)
        if manifest["record_cap"] != self.record_cap:
            raise DataError(
                f"archive record cap is {manifest['record_cap']}, writer asked for {self.record_cap}")
        self.segments = [ArchiveSegment.from_dict(s) for s in manifest["segments"]]
        committed = {s.path for s in self.segments}
        for stray in self.store.glob("segment-*.ndjson"):
            if stray.name not in committed:
                stray.unlink()
        if self.segments and self.segments[-1].record_count < self.record_cap:
            seg = self.segments.pop()
            path = self.store / seg.path
            with open(path, "r+b") as fh:
                fh.truncate(seg.size)
            data = path.read_bytes()
            self._hash = hashlib.sha256(data)
            self._fh = open(path, "ab")
            self._current = [seg.path, seg.first_ts, seg.last_ts, seg.record_count, seg.size]

    def append(self, tx: Transaction):
        last = self.last_ts
        if last is not None and tx.consensus_timestamp <= last:
            raise OrderingError(format_timestamp(last), format_timestamp(tx.consensus_timestamp))
        if self._current is None:
            name = f"segment-{len(self.segments):06d}.ndjson"
            self._fh = open(self.store / name, "wb")
            self._hash = hashlib.sha256()
            self._current = [name, tx.consensus_timestamp, tx.consensus_timestamp, 0, 0]
        line = (dumps_transaction(tx) + "\n").encode()
        self._fh.write(line)
        self._hash.update(line)
        cur = self._current
        cur[2] = tx.consensus_timestamp
        cur[3] += 1
        cur[4] += len(line)
        if cur[3] >= self.record_cap:
            self._seal()

    def extend(self, transactions: Iterable[Transaction]):
        for tx in transactions:
            self.append(tx)

    def _segment_from_current(self) -> ArchiveSegment:
        path, first, last, count, size = self._current
        return ArchiveSegment(path, first, last, count, "sha256:" + self._hash.hexdigest(), size)

    def _seal(self):
        self._fh.close()
        self.segments.append(self._segment_from_current())
        self._fh = self._hash = self._current = None
        self._write_manifest()

    def _write_manifest(self):
        segments = list(self.segments)
        if self._current is not None:
            segments.append(self._segment_from_current())
        manifest = {
            "version": MANIFEST_VERSION,
            "record_cap": self.record_cap,
            "record_count": sum(s.record_count for s in segments),
            "segments": [s.to_dict() for s in segments],
        }
        _atomic_write(self.store / MANIFEST, json.dumps(manifest, indent=2) + "\n")

    def commit(self) -> list[ArchiveSegment]:
        """Flush written records and make them durable in the manifest."""
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())
        self._write_manifest()
        return self.all_segments()

    def all_segments(self) -> list[ArchiveSegment]:
        out = list(self.segments)
        if self._current is not None:
            out.append(self._segment_from_current())
        return out

    def close(self) -> list[ArchiveSegment]:
        segments = self.commit()
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        return segments

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_archive(transactions: Iterable[Transaction], store,
                  record_cap: int = DEFAULT_RECORD_CAP) -> list[ArchiveSegment]:
    """Write a consensus-ordered stream to ``store``; returns the segment list."""
    with ArchiveWriter(store, record_cap) as writer:
        writer.extend(transactions)
    return writer.all_segments()


def verify_archive(store) -> list[ArchiveSegment]:
    segments = manifest_segments(store)
    for seg in segments:
        data = (Path(store) / seg.path).read_bytes()
        digest = "sha256:" + hashlib.sha256(data).hexdigest()
        if digest != seg.checksum or len(data) != seg.size:
            raise DataError(f"segment {seg.path} does not match its manifest checksum")
    return segments


def read_archive(store, start: int | None = None, end: int | None = None,
                 verify: bool = False) -> Iterator[Transaction]:
    """Yield archived transactions in consensus order, optionally limited to ``[start, end)``."""
    segments = verify_archive(store) if verify else manifest_segments(store)
    for seg in segments:
        if end is not None and seg.first_ts >= end:
            break
        if start is not None and seg.last_ts < start:
            continue
        with open(Path(store) / seg.path, "rb") as fh:
            data = fh.read(seg.size)
        for line in data.splitlines():
            tx = parse_transaction(line)
            if start is not None and tx.consensus_timestamp < start:
                continue
            if end is not None and tx.consensus_timestamp >= end:
                return
            yield tx


def archive_span(store) -> tuple[int, int] | None:
    """(first_ts, last_ts) of the archive, or None when empty."""
    segments = manifest_segments(store)
    if not segments:
        return None
    return segments[0].first_ts, segments[-1].last_ts


# -- rejects and balances -----------------------------------------------------

def append_reject(store, raw, reason: str):
    record = {"reason": reason, "record": raw if isinstance(raw, (dict, list)) else str(raw)}
    with open(Path(store) / "rejects.ndjson", "a") as fh:
        fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def write_snapshot(store, snapshot: BalanceSnapshot) -> Path:
    directory = Path(store) / "balances"
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{format_timestamp(snapshot.timestamp)}.json"
    _atomic_write(path, dumps_snapshot(snapshot))
    return path


def read_snapshots(store, start: int | None = None, end: int | None = None) -> list[BalanceSnapshot]:
    directory = Path(store) / "balances"
    if not directory.exists():
        return []
    out = []
    for path in directory.glob("*.json"):
        snap = parse_snapshot(path.read_text())
        if (start is None or snap.timestamp >= start) and (end is None or snap.timestamp < end):
            out.append(snap)
    return sorted(out, key=lambda s: s.timestamp)
