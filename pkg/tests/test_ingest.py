import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import T0, chain, mock_client, resumability_trial, tx
from hbarscope.errors import DataError, IngestionError, OrderingError, SnapshotUnavailableError
from hbarscope.ingest import (
    ArchiveWriter,
    FixtureSource,
    RateLimiter,
    fetch_balances,
    fetch_transactions,
    ingest,
    ingest_snapshots,
    load_manifest,
    load_state,
    parse_transaction,
    read_archive,
    read_snapshots,
    verify_archive,
    write_archive,
)
from hbarscope.ingest.mockserver import MockMirrorNode
from hbarscope.ingest.records import dumps_snapshot, dumps_transaction, transaction_to_dict
from hbarscope.model import NANOS_PER_DAY, NANOS_PER_WEEK, BalanceSnapshot, TimeWindow, format_timestamp

from conftest import acct

HOUR = 3600 * 10**9


def _page(txs):
    return {"transactions": [transaction_to_dict(t) for t in txs], "links": {"next": None}}


class TestRecords:
    def test_canonical_round_trip(self):
        t = tx(T0 + 123, (1, -10), (2, 10), name="CRYPTOTRANSFER")
        line = dumps_transaction(t)
        assert json.loads(line)["consensus_timestamp"] == format_timestamp(T0 + 123)
        assert parse_transaction(line) == t
        assert dumps_transaction(parse_transaction(line)) == line

    def test_mirror_record_drops_zero_legs(self):
        raw = {"consensus_timestamp": "1568332800.000000001", "name": "CRYPTOTRANSFER",
               "result": "SUCCESS", "transfers": [{"account": "0.0.1", "amount": -3},
                                                  {"account": "0.0.2", "amount": 3},
                                                  {"account": "0.0.3", "amount": 0}],
               "memo_base64": ""}
        assert len(parse_transaction(raw).transfers) == 2

    @pytest.mark.parametrize("raw", [
        "{not json",
        {"name": "X"},
        {"consensus_timestamp": "1.0", "name": "X", "transfers": [{"account": "0.0.1", "amount": 1.5}]},
        {"consensus_timestamp": "1.0", "name": "X", "transfers": [{"account": "0.0.x", "amount": 1}]},
        {"consensus_timestamp": "1.0", "name": "X", "transfers": [{"account": "0.0.1", "amount": True}]},
    ])
    def test_malformed(self, raw):
        from hbarscope.ingest import RecordError
        with pytest.raises(RecordError):
            parse_transaction(raw)


class TestArchive:
    def test_segment_cap(self, tmp_path):
        segs = write_archive(chain(10), tmp_path, record_cap=4)
        assert [s.record_count for s in segs] == [4, 4, 2]
        assert [s.record_count for s in verify_archive(tmp_path)] == [4, 4, 2]
        assert all(a.last_ts < b.first_ts for a, b in zip(segs, segs[1:]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 30), st.integers(1, 7))
    def test_round_trip(self, tmp_path_factory, n, cap):
        store = tmp_path_factory.mktemp("archive")
        txs = chain(n)
        write_archive(txs, store, record_cap=cap)
        assert list(read_archive(store, verify=True)) == txs
        body = b"".join((store / s.path).read_bytes() for s in verify_archive(store))
        assert body == "".join(dumps_transaction(t) + "\n" for t in txs).encode()

    def test_duplicate_timestamp(self, tmp_path):
        txs = chain(3)
        with pytest.raises(OrderingError) as info:
            write_archive(txs + [txs[-1]], tmp_path)
        assert info.value.previous == info.value.current == format_timestamp(txs[-1].consensus_timestamp)

    def test_range_read(self, tmp_path):
        txs = chain(10)
        write_archive(txs, tmp_path, record_cap=3)
        lo, hi = txs[2].consensus_timestamp, txs[7].consensus_timestamp
        assert list(read_archive(tmp_path, lo, hi)) == txs[2:7]

    def test_tamper_detected(self, tmp_path):
        segs = write_archive(chain(5), tmp_path, record_cap=10)
        path = tmp_path / segs[0].path
        path.write_bytes(path.read_bytes().replace(b"CRYPTOTRANSFER", b"CRYPTOTRANSFEX", 1))
        with pytest.raises(DataError):
            verify_archive(tmp_path)

    def test_reopen_discards_uncommitted(self, tmp_path):
        txs = chain(6)
        w = ArchiveWriter(tmp_path, record_cap=10)
        w.extend(txs[:3])
        w.commit()
        w.extend(txs[3:5])  # written but never committed
        w._fh.flush()
        w2 = ArchiveWriter(tmp_path, record_cap=10)
        assert w2.last_ts == txs[2].consensus_timestamp
        w2.extend(txs[3:])
        w2.close()
        assert list(read_archive(tmp_path, verify=True)) == txs

    def test_record_cap_mismatch(self, tmp_path):
        write_archive(chain(2), tmp_path, record_cap=4)
        with pytest.raises(DataError):
            ArchiveWriter(tmp_path, record_cap=5)


class TestFixtures:
    def test_three_files_in_order(self, tmp_path):
        txs = chain(9)
        # files deliberately hold interleaved records
        for i in range(3):
            (tmp_path / f"p{i}.json").write_text(json.dumps(_page(txs[i::3])))
        src = FixtureSource(tmp_path)
        cursor = src.cursor()
        window = TimeWindow(T0, T0 + NANOS_PER_WEEK)
        assert list(fetch_transactions(cursor, window, src)) == txs
        assert cursor.done

    def test_empty_window(self, tmp_path):
        (tmp_path / "p.json").write_text(json.dumps(_page(chain(3))))
        src = FixtureSource(tmp_path)
        cursor = src.cursor()
        window = TimeWindow(T0 - 1, T0)
        assert list(fetch_transactions(cursor, window, src)) == []
        assert cursor.done

    def test_ndjson_fixture(self, tmp_path):
        txs = chain(4)
        (tmp_path / "x.ndjson").write_text("".join(dumps_transaction(t) + "\n" for t in txs))
        src = FixtureSource(tmp_path)
        assert list(fetch_transactions(src.cursor(), TimeWindow(T0, T0 + NANOS_PER_DAY), src)) == txs

    def test_rejects_routed(self, tmp_path):
        txs = chain(3)
        page = _page(txs)
        page["transactions"].insert(1, {"consensus_timestamp": "garbage", "name": "X"})
        (tmp_path / "fx").mkdir()
        (tmp_path / "fx" / "p.json").write_text(json.dumps(page))
        ingest(FixtureSource(tmp_path / "fx"), T0, T0 + NANOS_PER_DAY, tmp_path / "a")
        assert list(read_archive(tmp_path / "a")) == txs
        rejects = (tmp_path / "a" / "rejects.ndjson").read_text().splitlines()
        assert len(rejects) == 1 and "garbage" in rejects[0]

    def test_snapshot_round_trip(self, tmp_path):
        big = 49 * 10**9 * 10**8 + 12345678
        snap = BalanceSnapshot(T0 + NANOS_PER_WEEK, {acct(2): big, acct(5): 7})
        (tmp_path / "b.json").write_text(dumps_snapshot(snap))
        got = fetch_balances(tmp_path, T0 + NANOS_PER_WEEK)
        assert got.total == big + 7
        assert dict(got.balances) == dict(snap.balances)

    def test_snapshot_thirty_seventy(self, tmp_path):
        snap = BalanceSnapshot(T0, {acct(1): 30, acct(2): 70})
        (tmp_path / "b.json").write_text(dumps_snapshot(snap))
        assert len(fetch_balances(tmp_path, T0 + 5).balances) == 2

    def test_snapshot_before_coverage(self, tmp_path):
        (tmp_path / "b.json").write_text(dumps_snapshot(BalanceSnapshot(T0, {acct(1): 1})))
        with pytest.raises(SnapshotUnavailableError):
            fetch_balances(tmp_path, T0 - 1)

    def test_ingest_snapshots(self, tmp_path):
        (tmp_path / "fx").mkdir()
        (tmp_path / "fx" / "b.json").write_text(dumps_snapshot(BalanceSnapshot(T0, {acct(1): 9})))
        ingest_snapshots(FixtureSource(tmp_path / "fx"), [T0, T0 + NANOS_PER_WEEK], tmp_path / "a")
        snaps = read_snapshots(tmp_path / "a")
        assert [s.timestamp for s in snaps] == [T0, T0 + NANOS_PER_WEEK]


class TestMirrorClient:
    def test_pagination(self):
        txs = chain(57, step=HOUR)
        with MockMirrorNode(txs, max_limit=10) as server:
            client = mock_client(server.url)
            cursor = client.cursor()
            got = list(fetch_transactions(cursor, TimeWindow(T0, T0 + NANOS_PER_WEEK), client))
            assert got == txs
            assert server.pages_served == 6
        assert cursor.done

    def test_two_429s_then_success(self):
        txs = chain(5)
        with MockMirrorNode(txs, script=[429, 429]) as server:
            client = mock_client(server.url)
            cursor = client.cursor()
            got = list(fetch_transactions(cursor, TimeWindow(T0, T0 + NANOS_PER_DAY), client))
            assert [s for _, _, s in server.log] == [429, 429, 200]
        assert got == txs
        assert cursor.retries == 2

    def test_retry_budget_exhausted(self):
        with MockMirrorNode(chain(5), script=[503] * 5) as server:
            client = mock_client(server.url, retry_budget=3)
            cursor = client.cursor()
            with pytest.raises(IngestionError) as info:
                list(fetch_transactions(cursor, TimeWindow(T0, T0 + NANOS_PER_DAY), client))
        assert info.value.cursor is cursor
        assert cursor.retries == 3

    def test_client_error_not_retried(self):
        with MockMirrorNode(chain(2), script=[400]) as server:
            client = mock_client(server.url)
            with pytest.raises(IngestionError):
                list(fetch_transactions(client.cursor(), TimeWindow(T0, T0 + NANOS_PER_DAY), client))
            assert len(server.log) == 1

    def test_retry_after_honoured(self):
        slept = []
        client = mock_client("http://unused", sleep=slept.append)

        class Resp:
            status_code = 429
            headers = {"Retry-After": "7"}

        class Session:
            calls = 0

            def get(self, url, params=None, timeout=None):
                Session.calls += 1
                if Session.calls == 1:
                    return Resp()
                ok = Resp()
                ok.status_code, ok.headers = 200, {}
                ok.json = lambda: {"transactions": [], "links": {"next": None}}
                return ok

        client.session = Session()
        assert client._get("http://unused/x") == {"transactions": [], "links": {"next": None}}
        assert slept == [7.0]

    def test_connection_refused_is_transport_error(self):
        client = mock_client("http://127.0.0.1:9", retry_budget=1, timeout=2)
        with pytest.raises(IngestionError):
            list(fetch_transactions(client.cursor(), TimeWindow(T0, T0 + NANOS_PER_DAY), client))

    def test_rate_cap(self):
        txs = chain(60, step=HOUR)
        rate = 10
        with MockMirrorNode(txs, max_limit=4) as server:
            client = mock_client(server.url, rate_limit=rate)
            list(fetch_transactions(client.cursor(), TimeWindow(T0, T0 + NANOS_PER_WEEK), client))
            times = server.request_times()
        assert len(times) == 15
        for i, t in enumerate(times):
            in_window = sum(1 for u in times[i:] if u < t + 1.0)
            assert in_window <= rate + 1

    def test_rate_limiter_spacing(self):
        now = [0.0]
        sleeps = []

        def sleep(d):
            sleeps.append(d)
            now[0] += d

        lim = RateLimiter(4, clock=lambda: now[0], sleep=sleep)
        for _ in range(5):
            lim.acquire()
        assert sleeps == [0.25] * 4

    def test_balances(self):
        snap = BalanceSnapshot(T0 + NANOS_PER_WEEK, {acct(i): i for i in range(1, 240)})
        with MockMirrorNode(snapshots=[snap]) as server:
            client = mock_client(server.url)
            got = client.balances(T0 + NANOS_PER_WEEK + 5)
            assert dict(got.balances) == dict(snap.balances)
            assert got.timestamp == T0 + NANOS_PER_WEEK + 5
            with pytest.raises(SnapshotUnavailableError):
                client.balances(T0 + 1)  # the server has nothing that early

    def test_balances_before_coverage(self):
        client = mock_client("http://unused", coverage_start=T0)
        with pytest.raises(SnapshotUnavailableError):
            client.balances(T0 - 1)


class TestPipeline:
    def test_matches_direct_write(self, tmp_path):
        txs = chain(120, step=HOUR)
        write_archive(txs, tmp_path / "direct", record_cap=40)
        with MockMirrorNode(txs, max_limit=25) as server:
            manifest = ingest(mock_client(server.url), T0, T0 + 2 * NANOS_PER_WEEK,
                              tmp_path / "ingested", record_cap=40)
        assert manifest == load_manifest(tmp_path / "direct")
        assert load_state(tmp_path / "ingested")["complete"]

    def test_resumable(self, tmp_path):
        txs = chain(200, step=HOUR)
        full, partial, resumed, error = resumability_trial(tmp_path, txs, T0, T0 + 2 * NANOS_PER_WEEK)
        assert error is not None
        assert 0 < partial["record_count"] < 200
        assert [s["checksum"] for s in resumed["segments"]] == [s["checksum"] for s in full["segments"]]
        assert list(read_archive(tmp_path / "resumed", verify=True)) == txs

    def test_error_carries_saved_cursor(self, tmp_path):
        txs = chain(100, step=HOUR)
        with MockMirrorNode(txs, max_limit=10, outage_after=2) as server:
            with pytest.raises(IngestionError) as info:
                ingest(mock_client(server.url, retry_budget=1), T0, T0 + NANOS_PER_WEEK,
                       tmp_path, concurrency=1)
        state = info.value.cursor
        assert state == load_state(tmp_path)
        assert not state["complete"] and state["next_link"]

    def test_strict_mode_rejects_unbalanced(self, tmp_path):
        bad = [tx(T0 + 1, (1, -5), (2, 4))]
        (tmp_path / "fx").mkdir()
        (tmp_path / "fx" / "p.json").write_text(json.dumps(_page(bad)))
        from hbarscope.errors import IntegrityError
        with pytest.raises(IntegrityError):
            ingest(FixtureSource(tmp_path / "fx"), T0, T0 + NANOS_PER_DAY, tmp_path / "a",
                   strict_zero_sum=True)
        ingest(FixtureSource(tmp_path / "fx"), T0, T0 + NANOS_PER_DAY, tmp_path / "b")
        assert load_state(tmp_path / "b")["unbalanced"] == 1

    def test_rerun_after_complete_is_noop(self, tmp_path):
        (tmp_path / "fx").mkdir()
        (tmp_path / "fx" / "p.json").write_text(json.dumps(_page(chain(5))))
        first = ingest(FixtureSource(tmp_path / "fx"), T0, T0 + NANOS_PER_DAY, tmp_path / "a")
        again = ingest(FixtureSource(tmp_path / "fx"), T0, T0 + NANOS_PER_DAY, tmp_path / "a")
        assert first == again
