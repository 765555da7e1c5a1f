"""Fetching ledger data and persisting it to the local archive."""

from .archive import (
    ArchiveSegment,
    ArchiveWriter,
    archive_span,
    load_manifest,
    read_archive,
    read_snapshots,
    verify_archive,
    write_archive,
    write_snapshot,
)
from .client import (
    ENDPOINT_ENV,
    FetchCursor,
    FixtureSource,
    MirrorNodeClient,
    RateLimiter,
    fetch_balances,
    fetch_transactions,
    make_source,
)
from .pipeline import ingest, ingest_snapshots, load_state
from .records import RecordError, dumps_transaction, parse_snapshot, parse_transaction

__all__ = [
    "ArchiveSegment", "ArchiveWriter", "archive_span", "load_manifest", "read_archive",
    "read_snapshots", "verify_archive", "write_archive", "write_snapshot", "ENDPOINT_ENV",
    "FetchCursor", "FixtureSource", "MirrorNodeClient", "RateLimiter", "fetch_balances",
    "fetch_transactions", "make_source", "ingest", "ingest_snapshots", "load_state",
    "RecordError", "dumps_transaction", "parse_snapshot", "parse_transaction",
]
