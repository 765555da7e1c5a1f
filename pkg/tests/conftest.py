import itertools

import pytest

from hbarscope.model import AccountId, make_transaction

T0 = 1_568_332_800 * 10**9  # 2019-09-13T00:00:00Z


def acct(n):
    return AccountId(0, 0, n)


def tx(ts, *legs, name="CRYPTOTRANSFER", result="SUCCESS"):
    """Transaction from (account-number, amount) legs."""
    return make_transaction(ts, name, [(f"0.0.{a}", amt) for a, amt in legs], result)


def chain(n, start=T0, step=10**9):
    """``n`` balanced two-party payments with strictly increasing timestamps."""
    out = []
    for i, ts in zip(range(n), itertools.count(start, step)):
        out.append(tx(ts, (1000 + i % 7, -(i + 5)), (2000 + i % 5, i + 5)))
    return out


@pytest.fixture
def transactions():
    return chain(10)


def mock_client(url, **kw):
    """Client with instant backoff so scripted failures do not slow the suite."""
    from hbarscope.ingest import MirrorNodeClient

    kw.setdefault("rate_limit", None)
    kw.setdefault("backoff_base", 0.0)
    kw.setdefault("seed", 0)
    return MirrorNodeClient(url, **kw)


def resumability_trial(tmp_path, records, start, end, outage_after=3, record_cap=40):
    """Manifests of an uninterrupted ingest and of an interrupted-then-resumed one.

    Both runs talk to a mock server that rate-limits twice before serving;
    the interrupted run hits a permanent 503 after ``outage_after`` pages.
    """
    from hbarscope.errors import IngestionError
    from hbarscope.ingest import ingest, load_manifest
    from hbarscope.ingest.mockserver import MockMirrorNode

    with MockMirrorNode(records, script=[429, 429], max_limit=25) as server:
        client = mock_client(server.url, retry_budget=2)
        full = ingest(client, start, end, tmp_path / "full", record_cap=record_cap, concurrency=2)

    with MockMirrorNode(records, script=[429, 429], max_limit=25, outage_after=outage_after) as server:
        client = mock_client(server.url, retry_budget=2)
        error = None
        try:
            ingest(client, start, end, tmp_path / "resumed", record_cap=record_cap, concurrency=2)
        except IngestionError as exc:
            error = exc
        partial = load_manifest(tmp_path / "resumed")
        server.outage_after = None
        resumed = ingest(client, start, end, tmp_path / "resumed", record_cap=record_cap,
                         concurrency=2)
    return full, partial, resumed, error


def to_txgraph(nx_graph, window=None):
    from hbarscope.graph import TxGraph

    return TxGraph.from_pairs(((acct(a + 1), acct(b + 1)) for a, b in nx_graph.edges), window)


def naive_z(g, core):
    """Violations of the ideal pattern for one core set, counted from scratch."""
    core = set(core)
    nodes = sorted(g.nodes)
    z = 0
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            linked = (min(a, b), max(a, b)) in g.edges
            if a in core and b in core and not linked:
                z += 1
            elif a not in core and b not in core and linked:
                z += 1
    return z


def brute_force_prefix_min(g):
    """Minimum Z over every degree-descending prefix, ties by account id."""
    order = sorted(g.nodes, key=lambda v: (-g.degree[v], v))
    return min(naive_z(g, order[:k]) for k in range(1, len(order) + 1))


def brute_force_bipartition_min(g):
    """Minimum Z over all 2^N core sets (N <= 16)."""
    nodes = sorted(g.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    edges = [(index[a], index[b]) for a, b in g.edges]
    n = len(nodes)
    best = None
    for mask in range(1, 1 << n):
        k = bin(mask).count("1")
        cc = pp = 0
        for a, b in edges:
            ia, ib = mask >> a & 1, mask >> b & 1
            cc += ia & ib
            pp += (1 - ia) & (1 - ib)
        z = k * (k - 1) // 2 - cc + pp
        best = z if best is None else min(best, z)
    return best


def connected_atlas_graphs():
    """Every connected graph on 2..7 nodes (up to isomorphism), from the networkx atlas."""
    import networkx as nx

    return [g for g in nx.graph_atlas_g()[1:] if g.number_of_nodes() >= 2 and nx.is_connected(g)]


def random_connected_graphs(count, n_lo, n_hi, seed=0):
    import networkx as nx
    import numpy as np

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(n_lo, n_hi + 1))
        g = nx.gnp_random_graph(n, float(rng.uniform(0.15, 0.7)), seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            out.append(g)
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    test_acceptance = sys.modules.get("test_acceptance")
    if test_acceptance and test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
