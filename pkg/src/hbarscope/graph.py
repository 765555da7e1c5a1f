"""Windowed transaction networks and the activity series derived from the archive."""

from __future__ import annotations

import enum
from bisect import bisect_left
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .model import (
    NANOS_PER_DAY,
    SERVICE_LABELS,
    AccountId,
    BalanceSnapshot,
    EntityLabelSet,
    Label,
    TimeWindow,
    Transaction,
    add_months,
    floor_day,
    make_windows,
    parse_account_id,
)


@dataclass(frozen=True)
class MetricSeries:
    """One scalar per window start. ``None`` marks a window where the metric is undefined."""

    name: str
    points: tuple = ()

    def __post_init__(self):
        pts = tuple((int(t), v) for t, v in self.points)
        for (a, _), (b, _) in zip(pts, pts[1:]):
            if b <= a:
                raise ValueError(f"series {self.name!r}: timestamps must strictly increase")
        object.__setattr__(self, "points", pts)

    @property
    def times(self) -> list[int]:
        return [t for t, _ in self.points]

    @property
    def values(self) -> list:
        return [v for _, v in self.points]

    def as_dict(self) -> dict:
        return dict(self.points)

    def to_numpy(self) -> np.ndarray:
        return np.array([np.nan if v is None else v for v in self.values], dtype=float)

    def defined(self) -> "MetricSeries":
        return MetricSeries(self.name, tuple(p for p in self.points if p[1] is not None))

    def __len__(self):
        return len(self.points)


# -- graphs -------------------------------------------------------------------

def _pair(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class TxGraph:
    """Undirected simple graph; edge weights count the transactions linking a pair."""

    edges: Mapping[tuple, int] = field(default_factory=dict)
    window: TimeWindow | None = None

    def __post_init__(self):
        clean = {}
        for (a, b), w in dict(self.edges).items():
            if a == b:
                raise ValueError(f"self-loop on {a}")
            key = _pair(a, b)
            clean[key] = clean.get(key, 0) + int(w)
        object.__setattr__(self, "edges", MappingProxyType(clean))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple], window: TimeWindow | None = None) -> "TxGraph":
        counts = Counter(_pair(a, b) for a, b in pairs)
        return cls(counts, window)

    @cached_property
    def neighbors(self) -> Mapping:
        adj = defaultdict(set)
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return MappingProxyType({v: frozenset(ns) for v, ns in adj.items()})

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.neighbors)

    @cached_property
    def degree(self) -> Mapping:
        return MappingProxyType({v: len(ns) for v, ns in self.neighbors.items()})

    @property
    def n_nodes(self) -> int:
        return len(self.neighbors)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.array(sorted(self.degree.values()), dtype=np.int64)

    def without(self, accounts) -> "TxGraph":
        """Induced subgraph on the remaining nodes; nodes left isolated disappear."""
        drop = set(accounts)
        return TxGraph({e: w for e, w in self.edges.items()
                        if e[0] not in drop and e[1] not in drop}, self.window)

    def to_edge_list(self) -> str:
        return "".join(f"{a} {b} {w}\n" for (a, b), w in sorted(self.edges.items()))

    @classmethod
    def from_edge_list(cls, text: str, window: TimeWindow | None = None) -> "TxGraph":
        edges = {}
        for line in text.splitlines():
            if line.strip():
                a, b, w = line.split()
                edges[_pair(parse_account_id(a), parse_account_id(b))] = int(w)
        return cls(edges, window)


def transaction_pairs(tx: Transaction, exclude: frozenset = frozenset()) -> set[tuple]:
    """Sender/receiver pairs of one transaction.

    Legs are netted per account first. Every account with a negative net
    amount is paired with every account with a positive one; accounts in
    ``exclude`` take no part.
    """
    net = defaultdict(int)
    for t in tx.transfers:
        if t.account not in exclude:
            net[t.account] += t.amount
    senders = [a for a, v in net.items() if v < 0]
    receivers = [a for a, v in net.items() if v > 0]
    return {_pair(s, r) for s in senders for r in receivers}


def _excluded(labels: EntityLabelSet | None, exclude_labels) -> frozenset:
    if labels is None or not exclude_labels:
        return frozenset()
    return labels.accounts_with(*exclude_labels)


def build_graph(transactions: Iterable[Transaction], window: TimeWindow | None = None,
                filter: Callable[[Transaction], bool] | None = None,
                labels: EntityLabelSet | None = None, exclude_labels=SERVICE_LABELS,
                include_failed: bool = False) -> TxGraph:
    """Transaction network of ``window`` (or of every transaction when None)."""
    exclude = _excluded(labels, exclude_labels)
    weights = Counter()
    for tx in transactions:
        if window is not None and tx.consensus_timestamp not in window:
            continue
        if not (tx.successful or include_failed):
            continue
        if filter is not None and not filter(tx):
            continue
        weights.update(transaction_pairs(tx, exclude))
    return TxGraph(weights, window)


def bucket_by_window(transactions: Iterable[Transaction], windows: Sequence[TimeWindow]) -> list[list]:
    starts = [w.start for w in windows]
    buckets = [[] for _ in windows]
    for tx in transactions:
        i = bisect_left(starts, tx.consensus_timestamp + 1) - 1
        if i >= 0 and tx.consensus_timestamp in windows[i]:
            buckets[i].append(tx)
    return buckets


def build_graphs(transactions: Iterable[Transaction], windows: Sequence[TimeWindow],
                 workers: int = 1, **kwargs) -> list[TxGraph]:
    """One graph per window, built from a single pass over ``transactions``."""
    buckets = bucket_by_window(transactions, windows)
    jobs = list(zip(buckets, windows))
    if workers <= 1:
        return [build_graph(b, w, **kwargs) for b, w in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: build_graph(job[0], job[1], **kwargs), jobs))


# -- cohorts ------------------------------------------------------------------

def birth_dates(transactions: Iterable[Transaction], successful_only: bool = False) -> dict:
    """First consensus timestamp at which each account appears in a transfer list."""
    births = {}
    for tx in transactions:
        if successful_only and not tx.successful:
            continue
        ts = tx.consensus_timestamp
        for t in tx.transfers:
            prev = births.get(t.account)
            if prev is None or ts < prev:
                births[t.account] = ts
    return births


class Cohort(str, enum.Enum):
    EARLY_1M = "EarlyUsers1M"
    EARLY_1Y = "EarlyUsers1Y"
    ALL = "All"


@dataclass(frozen=True)
class CohortSet:
    cohort: Cohort
    members: frozenset

    def __contains__(self, account) -> bool:
        return account in self.members

    def __len__(self):
        return len(self.members)


def early_user_cohorts(births: Mapping[AccountId, int], period_start: int) -> dict[Cohort, CohortSet]:
    """Accounts born in the first month and first year after ``period_start``, plus everyone."""
    month_end = add_months(period_start, 1)
    year_end = add_months(period_start, 12)
    return {
        Cohort.EARLY_1M: CohortSet(Cohort.EARLY_1M, frozenset(
            a for a, t in births.items() if period_start <= t < month_end)),
        Cohort.EARLY_1Y: CohortSet(Cohort.EARLY_1Y, frozenset(
            a for a, t in births.items() if period_start <= t < year_end)),
        Cohort.ALL: CohortSet(Cohort.ALL, frozenset(births)),
    }


# -- activity -----------------------------------------------------------------

def _day_range(transactions: Sequence[Transaction], start, end) -> list[int]:
    if start is None:
        if not transactions:
            return []
        start = transactions[0].consensus_timestamp
    if end is None:
        if not transactions:
            return []
        end = transactions[-1].consensus_timestamp + 1
    return [w.start for w in make_windows(start, end, "daily")]


def active_accounts(transactions: Iterable[Transaction], cohort: CohortSet | None = None,
                    start: int | None = None, end: int | None = None,
                    births: Mapping[AccountId, int] | None = None) -> dict[str, MetricSeries]:
    """Daily active accounts with cumulative-account companions.

    Returns ``active`` (distinct accounts in a successful transaction that
    day), ``cumulative`` (accounts born on or before that day) and
    ``active_pct`` (100 * active / cumulative). With a cohort, every count is
    restricted to its members.
    """
    txs = sorted(transactions, key=lambda t: t.consensus_timestamp)
    days = _day_range(txs, start, end)
    if births is None:
        births = birth_dates(txs)
    member = (lambda a: True) if cohort is None else cohort.__contains__
    active = defaultdict(set)
    for tx in txs:
        if tx.successful:
            day = floor_day(tx.consensus_timestamp)
            active[day].update(a for a in tx.accounts() if member(a))
    born_days = sorted(floor_day(t) for a, t in births.items() if member(a))
    name = "" if cohort is None else f"[{cohort.cohort.value}]"
    act, cum, pct = [], [], []
    for d in days:
        n_active = len(active.get(d, ()))
        n_cum = bisect_left(born_days, d + 1)
        act.append((d, n_active))
        cum.append((d, n_cum))
        pct.append((d, 100.0 * n_active / n_cum if n_cum else None))
    return {
        "active": MetricSeries("active" + name, act),
        "cumulative": MetricSeries("cumulative" + name, cum),
        "active_pct": MetricSeries("active_pct" + name, pct),
    }


def released_supply(snapshots: Iterable[BalanceSnapshot], labels: EntityLabelSet,
                    births: Mapping[AccountId, int] | None = None,
                    period_start: int | None = None) -> dict[str, MetricSeries]:
    """Tinybars held outside the Treasury per snapshot.

    With ``births`` and ``period_start`` a companion ``born_after_first_year``
    series sums the balances of accounts first seen a year or more after
    ``period_start``.
    """
    treasury = labels.require(Label.TREASURY, "released supply")
    snaps = sorted(snapshots, key=lambda s: s.timestamp)
    released = [(s.timestamp, sum(b for a, b in s.balances.items() if a not in treasury))
                for s in snaps]
    out = {"released": MetricSeries("released", released)}
    if births is not None and period_start is not None:
        cutoff = add_months(period_start, 12)
        late = [(s.timestamp, sum(b for a, b in s.balances.items()
                                  if a not in treasury and births.get(a, -1) >= cutoff))
                for s in snaps]
        out["born_after_first_year"] = MetricSeries("born_after_first_year", late)
    return out


CATEGORY_LABELS = (Label.TREASURY, Label.HBAR_FOUNDATION, Label.SWIRLDS)


def tx_counts_by_category(transactions: Iterable[Transaction], labels: EntityLabelSet,
                          start: int | None = None, end: int | None = None) -> dict[str, MetricSeries]:
    """Daily transaction counts by outcome, labelled-entity involvement and type.

    A transaction touching several labelled entities counts once for each.
    ``type:<NAME>`` counts every transaction of that type; the ``pct_``
    variants are shares of that day's successful transactions.
    """
    txs = sorted(transactions, key=lambda t: t.consensus_timestamp)
    days = _day_range(txs, start, end)
    by_label = {l: labels.accounts_with(l) for l in CATEGORY_LABELS}
    counts = defaultdict(Counter)
    types = set()
    for tx in txs:
        c = counts[floor_day(tx.consensus_timestamp)]
        ok = tx.successful
        c["total"] += 1
        c["successful" if ok else "unsuccessful"] += 1
        c[f"type:{tx.name}"] += 1
        types.add(tx.name)
        if ok:
            c[f"ok_type:{tx.name}"] += 1
        touched = tx.accounts()
        for l, accts in by_label.items():
            if touched & accts:
                c[l.value] += 1
                if ok:
                    c[f"ok:{l.value}"] += 1
    names = ["total", "successful", "unsuccessful"] + [l.value for l in CATEGORY_LABELS]
    names += [f"type:{t}" for t in sorted(types)]
    out = {n: MetricSeries(n, [(d, counts[d][n]) for d in days]) for n in names}

    def pct(key, d):
        ok = counts[d]["successful"]
        return 100.0 * counts[d][key] / ok if ok else None

    for l in CATEGORY_LABELS:
        n = f"pct:{l.value}"
        out[n] = MetricSeries(n, [(d, pct(f"ok:{l.value}", d)) for d in days])
    for t in sorted(types):
        n = f"pct:type:{t}"
        out[n] = MetricSeries(n, [(d, pct(f"ok_type:{t}", d)) for d in days])
    return out


def weekly_windows_for(transactions: Sequence[Transaction], start=None, end=None) -> list[TimeWindow]:
    """Weekly windows anchored on the first day of the data at 00:00 UTC."""
    days = _day_range(transactions, start, end)
    if not days:
        return []
    return make_windows(days[0], days[-1] + NANOS_PER_DAY, "weekly", anchor=days[0])
