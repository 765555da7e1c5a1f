import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import T0, acct, chain, tx
from hbarscope.errors import ConfigurationError
from hbarscope.graph import (
    Cohort,
    MetricSeries,
    TxGraph,
    active_accounts,
    birth_dates,
    build_graph,
    build_graphs,
    early_user_cohorts,
    released_supply,
    transaction_pairs,
    tx_counts_by_category,
    weekly_windows_for,
)
from hbarscope.model import NANOS_PER_DAY, NANOS_PER_WEEK, BalanceSnapshot, EntityLabelSet, Label, TimeWindow, make_windows

A, B, C = acct(1), acct(2), acct(3)
WEEK = TimeWindow(T0, T0 + NANOS_PER_WEEK)


def random_ledger(seed, n=60, accounts=15, days=20):
    rng = random.Random(seed)
    out = []
    ts = sorted(rng.sample(range(T0, T0 + days * NANOS_PER_DAY, 10**9), n))
    for t in ts:
        k = rng.randint(2, 4)
        parties = rng.sample(range(1, accounts + 1), k)
        amounts = [rng.randint(1, 100) for _ in parties[1:]]
        legs = [(parties[0], -sum(amounts))] + list(zip(parties[1:], amounts))
        result = "SUCCESS" if rng.random() > 0.1 else "INSUFFICIENT_PAYER_BALANCE"
        out.append(tx(t, *legs, result=result))
    return out


class TestBuildGraph:
    def test_single_pair(self):
        g = build_graph([tx(T0, (1, -10), (2, 10))], WEEK)
        assert g.nodes == {A, B}
        assert dict(g.edges) == {(A, B): 1}

    def test_fan_out(self):
        g = build_graph([tx(T0, (1, -10), (2, 6), (3, 4))], WEEK)
        assert set(g.edges) == {(A, B), (A, C)}

    def test_weight_vs_degree(self):
        g = build_graph([tx(T0, (1, -10), (2, 10)), tx(T0 + 1, (1, -3), (2, 3))], WEEK)
        assert g.edges[(A, B)] == 2
        assert g.degree[A] == 1

    def test_fee_account_excluded_by_label(self):
        labels = EntityLabelSet({acct(98): Label.FEE_ACCOUNT})
        t = tx(T0, (1, -11), (2, 10), (98, 1))
        assert build_graph([t], WEEK, labels=labels).nodes == {A, B}
        assert acct(98) in build_graph([t], WEEK, labels=labels, exclude_labels=()).nodes

    def test_failed_excluded_by_default(self):
        t = tx(T0, (1, -1), (98, 1), result="INSUFFICIENT_PAYER_BALANCE")
        assert build_graph([t], WEEK).n_edges == 0
        assert build_graph([t], WEEK, include_failed=True).n_edges == 1

    def test_window_and_filter(self):
        txs = [tx(T0, (1, -1), (2, 1)), tx(T0 + NANOS_PER_WEEK, (1, -1), (3, 1))]
        assert build_graph(txs, WEEK).nodes == {A, B}
        assert build_graph(txs, filter=lambda t: t.name == "X").n_edges == 0

    def test_empty_window(self):
        g = build_graph([], WEEK)
        assert g.n_nodes == 0 and g.n_edges == 0

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            TxGraph({(A, A): 1})

    def test_netting_removes_pass_through(self):
        # account 2 both pays and receives; only its net position counts
        t = tx(T0, (1, -10), (2, 10), (2, -4), (3, 4))
        assert transaction_pairs(t) == {(A, B), (A, C)}

    def test_edge_list_round_trip(self):
        g = build_graph(chain(20), None)
        assert TxGraph.from_edge_list(g.to_edge_list()) == g

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_invariants(self, seed):
        txs = random_ledger(seed)
        g = build_graph(txs)
        nodes = g.nodes
        assert nodes == {v for e in g.edges for v in e}
        for v, d in g.degree.items():
            assert d == len(g.neighbors[v]) <= len(nodes) - 1
        shuffled = txs[:]
        random.Random(seed).shuffle(shuffled)
        assert build_graph(shuffled) == g
        ws = make_windows(T0, T0 + 20 * NANOS_PER_DAY, "weekly")
        for w in ws:
            assert build_graph(txs, w).nodes <= nodes

    def test_build_graphs_matches_single(self):
        txs = random_ledger(3)
        ws = make_windows(T0, T0 + 20 * NANOS_PER_DAY, "weekly")
        expected = [build_graph(txs, w) for w in ws]
        assert build_graphs(txs, ws) == expected
        assert build_graphs(txs, ws, workers=3) == expected


class TestCohorts:
    def test_birth_dates(self):
        txs = [tx(T0 + 5, (1, -1), (2, 1)), tx(T0 + 9, (1, -1), (3, 1))]
        births = birth_dates(txs)
        assert births == {A: T0 + 5, B: T0 + 5, C: T0 + 9}
        assert acct(4) not in births
        assert birth_dates(reversed(txs)) == births

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_1m_subset_of_1y(self, seed):
        rng = random.Random(seed)
        births = {acct(i): T0 + rng.randint(0, 500) * NANOS_PER_DAY for i in range(50)}
        c = early_user_cohorts(births, T0)
        assert c[Cohort.EARLY_1M].members <= c[Cohort.EARLY_1Y].members <= c[Cohort.ALL].members

    def test_weekly_windows_anchor(self):
        txs = [tx(T0 + 3 * NANOS_PER_DAY + 5, (1, -1), (2, 1)),
               tx(T0 + 20 * NANOS_PER_DAY, (1, -1), (2, 1))]
        ws = weekly_windows_for(txs)
        assert ws[0].start == T0 + 3 * NANOS_PER_DAY
        assert ws[-1].end > txs[-1].consensus_timestamp


class TestActiveAccounts:
    def test_daily_constant(self):
        txs = [tx(T0 + d * NANOS_PER_DAY, (1, -1), (2, 1)) for d in range(3)]
        cohort = early_user_cohorts({A: T0}, T0)[Cohort.EARLY_1M]
        s = active_accounts(txs, cohort)
        assert s["active"].values == [1, 1, 1]
        assert s["cumulative"].values == [1, 1, 1]
        assert s["active_pct"].values == [100.0, 100.0, 100.0]

    def test_cumulative_monotone(self):
        s = active_accounts(random_ledger(7))
        vals = s["cumulative"].values
        assert vals == sorted(vals)

    def test_cohort_brute_force(self):
        # five accounts born on day 1, five on day 40; everyone trades on day 40
        early = [acct(i) for i in range(1, 6)]
        late = [acct(i) for i in range(6, 11)]
        txs = [tx(T0 + i, (a.num, -1), (a.num + 100, 1)) for i, a in enumerate(early)]
        day40 = T0 + 39 * NANOS_PER_DAY
        txs += [tx(day40 + i, (a.num, -1), (b.num, 1)) for i, (a, b) in enumerate(zip(late, early))]
        births = birth_dates(txs)
        cohort = early_user_cohorts(births, T0)[Cohort.EARLY_1M]
        s = active_accounts(txs, cohort, births=births)
        day40_active = s["active"].as_dict()[day40]
        assert day40_active == len({b for b in early}) == 5
        expected = {a for t in txs if t.consensus_timestamp >= day40 for a in t.accounts() if a in cohort}
        assert day40_active == len(expected) <= 5

    def test_failed_not_active(self):
        txs = [tx(T0, (1, -1), (2, 1), result="INVALID_SIGNATURE")]
        assert active_accounts(txs)["active"].values == [0]


class TestReleasedSupply:
    LABELS = EntityLabelSet({acct(9): Label.TREASURY})

    def test_example(self):
        snap = BalanceSnapshot(T0, {acct(9): 40, A: 35, B: 25})
        assert released_supply([snap], self.LABELS)["released"].values == [60]

    def test_all_in_treasury(self):
        snap = BalanceSnapshot(T0, {acct(9): 100})
        assert released_supply([snap], self.LABELS)["released"].values == [0]

    def test_missing_treasury(self):
        with pytest.raises(ConfigurationError, match="Treasury"):
            released_supply([BalanceSnapshot(T0, {A: 1})], EntityLabelSet({}))

    def test_born_after_first_year(self):
        late = T0 + 400 * NANOS_PER_DAY
        snap = BalanceSnapshot(late + NANOS_PER_DAY, {acct(9): 10, A: 3, B: 4})
        out = released_supply([snap], self.LABELS, births={A: T0, B: late}, period_start=T0)
        assert out["born_after_first_year"].values == [4]

    @given(st.lists(st.integers(0, 10**18), min_size=1, max_size=5))
    def test_cap(self, balances):
        snap = BalanceSnapshot(T0, {acct(i + 10): b for i, b in enumerate(balances)})
        from hbarscope.model import MAX_SUPPLY
        assert released_supply([snap], self.LABELS)["released"].values[0] <= MAX_SUPPLY


class TestTxCounts:
    def test_totals(self):
        txs = [tx(T0 + i, (1, -1), (2, 1), result="SUCCESS" if i >= 2 else "FAIL") for i in range(10)]
        s = tx_counts_by_category(txs, EntityLabelSet({}))
        assert s["total"].values == [10]
        assert s["unsuccessful"].values == [2]
        assert s["successful"].values == [8]

    def test_double_count(self):
        labels = EntityLabelSet({acct(2): Label.TREASURY, acct(3): Label.SWIRLDS})
        s = tx_counts_by_category([tx(T0, (2, -5), (3, 5))], labels)
        assert s["Treasury"].values == [1] and s["Swirlds"].values == [1]
        assert s["HbarFoundation"].values == [0]

    def test_type_percentages(self):
        txs = random_ledger(11)
        txs = [tx(t.consensus_timestamp, *[(x.account.num, x.amount) for x in t.transfers],
                  name=("A", "B", "C")[i % 3], result=t.result) for i, t in enumerate(txs)]
        s = tx_counts_by_category(txs, EntityLabelSet({}))
        types = [k for k in s if k.startswith("pct:type:")]
        for i, d in enumerate(s["total"].times):
            vals = [s[k].points[i][1] for k in types]
            if vals[0] is not None:
                assert sum(vals) == pytest.approx(100.0) and sum(vals) <= 100.0 + 1e-9

    def test_series_are_daily(self):
        s = tx_counts_by_category(random_ledger(5), EntityLabelSet({}))
        times = s["total"].times
        assert all(b - a == NANOS_PER_DAY for a, b in zip(times, times[1:]))


class TestMetricSeries:
    def test_strictly_increasing(self):
        with pytest.raises(ValueError):
            MetricSeries("x", [(2, 1), (2, 3)])

    def test_gaps(self):
        s = MetricSeries("x", [(1, 1.0), (2, None), (3, 2.0)])
        assert s.defined().times == [1, 3]
        assert s.to_numpy()[1] != s.to_numpy()[1]
