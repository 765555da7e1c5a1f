"""Seeded synthetic ledger so the whole pipeline runs without network access.

The generator replays a small economy: the Treasury funds new accounts with
power-law distributed grants, users pay each other with preferential
attachment on past counterparties, consensus-service messages dominate the
volume, and every transaction pays a fee to the fee account and a node. All
transactions balance exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest.archive import write_archive, write_snapshot
from .ingest.records import snapshot_to_dict, transaction_to_dict
from .model import (
    MAX_SUPPLY,
    NANOS_PER_DAY,
    NANOS_PER_WEEK,
    TINYBARS_PER_HBAR,
    AccountId,
    BalanceSnapshot,
    EntityLabelSet,
    Label,
    Transaction,
    Transfer,
    format_label_file,
    ns_to_date_str,
    to_ns,
)
from .structure import sample_discrete_power_law

TREASURY = AccountId(0, 0, 2)
FEE_ACCOUNT = AccountId(0, 0, 98)
STAKING_REWARD = AccountId(0, 0, 800)
HBAR_FOUNDATION = AccountId(0, 0, 1001)
SWIRLDS = AccountId(0, 0, 1002)
NODES = tuple(AccountId(0, 0, n) for n in range(3, 7))
FIRST_USER = 2000

DEMO_LABELS = EntityLabelSet({
    TREASURY: Label.TREASURY,
    FEE_ACCOUNT: Label.FEE_ACCOUNT,
    STAKING_REWARD: Label.STAKING_REWARD,
    HBAR_FOUNDATION: Label.HBAR_FOUNDATION,
    SWIRLDS: Label.SWIRLDS,
})

FEE = 100_000  # tinybars per transaction
NODE_SHARE = 10_000


def pareto_wealth(n: int, alpha: float = 2.5, unit: int = 100 * TINYBARS_PER_HBAR,
                  rng=None) -> np.ndarray:
    """Grant sizes in tinybars: discrete power law in multiples of ``unit``."""
    return sample_discrete_power_law(alpha, n, xmin=1, rng=rng) * unit


@dataclass
class DemoLedger:
    transactions: list[Transaction]
    snapshots: list[BalanceSnapshot]
    labels: EntityLabelSet
    start: int
    end: int
    prices: dict = field(default_factory=dict)


class _Economy:
    def __init__(self, rng: np.random.Generator, wealth_alpha: float, n_grants: int):
        self.rng = rng
        self.grants = iter(pareto_wealth(n_grants, wealth_alpha, rng=rng).tolist())
        self.balances = {TREASURY: MAX_SUPPLY}
        self.users: list[AccountId] = []
        self.contacts: list[AccountId] = []  # one entry per past counterparty: PA weights
        self.next_user = FIRST_USER

    def _fee_legs(self, payer):
        node = NODES[int(self.rng.integers(len(NODES)))]
        return [(payer, -FEE), (node, NODE_SHARE), (FEE_ACCOUNT, FEE - NODE_SHARE)]

    def _apply(self, ts, name, legs, result="SUCCESS") -> Transaction:
        net = {}
        for a, amt in legs:
            net[a] = net.get(a, 0) + amt
        for a, amt in net.items():
            self.balances[a] = self.balances.get(a, 0) + amt
            if self.balances[a] < 0:
                raise AssertionError(f"synthetic ledger overdrew {a}")
        transfers = tuple(sorted((Transfer(a, v) for a, v in net.items() if v), key=lambda t: t.account))
        return Transaction(ts, name, result, transfers)

    def _pick_user(self, preferential: bool) -> AccountId:
        if preferential and self.contacts and self.rng.random() < 0.85:
            return self.contacts[int(self.rng.integers(len(self.contacts)))]
        return self.users[int(self.rng.integers(len(self.users)))]

    def _solvent(self, need: int, tries: int = 8):
        for _ in range(tries):
            u = self._pick_user(True)
            if self.balances.get(u, 0) > need:
                return u
        return None

    def grant(self, ts, funder=TREASURY, amount=None) -> Transaction:
        new = AccountId(0, 0, self.next_user)
        self.next_user += 1
        if amount is None:
            amount = next(self.grants)
        amount = min(amount, self.balances[funder] - FEE)
        legs = [(funder, -amount), (new, amount)] + self._fee_legs(funder)
        self.users.append(new)
        return self._apply(ts, "CRYPTOCREATEACCOUNT", legs)

    def payment(self, ts) -> Transaction | None:
        sender = self._solvent(2 * FEE)
        if sender is None:
            return None
        receiver = self._pick_user(True)
        if receiver == sender:
            receiver = self._pick_user(False)
        if receiver == sender:
            return None
        spendable = self.balances[sender] - FEE
        amount = max(1, int(spendable * self.rng.uniform(0.01, 0.3)))
        self.contacts += [sender, receiver]
        legs = [(sender, -amount), (receiver, amount)] + self._fee_legs(sender)
        return self._apply(ts, "CRYPTOTRANSFER", legs)

    def fee_only(self, ts, name, result="SUCCESS") -> Transaction | None:
        payer = self._solvent(FEE)
        if payer is None:
            return None
        return self._apply(ts, name, self._fee_legs(payer), result)

    def entity_transfer(self, ts) -> Transaction:
        entity = (HBAR_FOUNDATION, SWIRLDS)[int(self.rng.integers(2))]
        if self.balances.get(entity, 0) > 10**6 * TINYBARS_PER_HBAR and self.users:
            receiver = self._pick_user(False)
            amount = int(self.rng.integers(1_000, 100_000)) * TINYBARS_PER_HBAR
            legs = [(entity, -amount), (receiver, amount)] + self._fee_legs(entity)
        else:
            amount = 10**8 * TINYBARS_PER_HBAR
            legs = [(TREASURY, -amount), (entity, amount)] + self._fee_legs(TREASURY)
        return self._apply(ts, "CRYPTOTRANSFER", legs)

    def staking_reward(self, ts) -> Transaction | None:
        if self.balances.get(STAKING_REWARD, 0) <= 10**4 * TINYBARS_PER_HBAR:
            amount = 10**7 * TINYBARS_PER_HBAR
            return self._apply(ts, "CRYPTOTRANSFER",
                               [(TREASURY, -amount), (STAKING_REWARD, amount)] + self._fee_legs(TREASURY))
        receivers = {self._pick_user(False) for _ in range(3)}
        legs = [(STAKING_REWARD, -10 * TINYBARS_PER_HBAR * len(receivers))]
        legs += [(r, 10 * TINYBARS_PER_HBAR) for r in receivers]
        return self._apply(ts, "CRYPTOTRANSFER", legs)


def _timestamps(rng, n: int, start: int, end: int) -> np.ndarray:
    """Sorted, strictly increasing, with activity density growing linearly in time."""
    span = end - start - n
    u = np.sqrt(rng.random(n))
    ts = np.sort((u * span).astype(np.int64)) + np.arange(n, dtype=np.int64) + start
    return ts


def generate_ledger(n_transactions: int = 10_000, n_accounts: int = 1_500, weeks: int = 10,
                    start="2019-09-13", seed: int = 42, wealth_alpha: float = 2.5,
                    failure_rate: float = 0.03) -> DemoLedger:
    """Build a deterministic synthetic ledger with weekly balance snapshots.

    Up to ``n_accounts`` users are created along the way. Snapshots are
    taken at every week boundary after ``start``.
    """
    rng = np.random.default_rng(seed)
    start_ns = to_ns(start)
    end_ns = start_ns + weeks * NANOS_PER_WEEK
    eco = _Economy(rng, wealth_alpha, n_accounts + n_transactions)
    times = _timestamps(rng, n_transactions, start_ns, end_ns)
    creation_p = min(0.9, n_accounts / max(n_transactions, 1))
    txs = []
    boundaries = [start_ns + k * NANOS_PER_WEEK for k in range(1, weeks + 1)]
    snapshots = []
    b = 0
    for ts in times.tolist():
        while b < len(boundaries) and ts >= boundaries[b]:
            snapshots.append(BalanceSnapshot(boundaries[b], dict(eco.balances)))
            b += 1
        roll = rng.random()
        tx = None
        if len(eco.users) < 20 or (roll < creation_p and len(eco.users) < n_accounts):
            tx = eco.grant(ts)
        elif roll < creation_p + 0.02:
            tx = eco.entity_transfer(ts)
        elif roll < creation_p + 0.03:
            tx = eco.staking_reward(ts)
        elif roll < creation_p + 0.03 + failure_rate:
            name = ("CRYPTOTRANSFER", "CONSENSUSSUBMITMESSAGE")[int(rng.integers(2))]
            tx = eco.fee_only(ts, name, "INSUFFICIENT_PAYER_BALANCE")
        elif roll < 0.55:
            tx = eco.payment(ts)
        elif roll < 0.6:
            tx = eco.fee_only(ts, "TOKENASSOCIATE")
        else:
            tx = eco.fee_only(ts, "CONSENSUSSUBMITMESSAGE")
        if tx is None:
            tx = eco.grant(ts) if len(eco.users) < n_accounts else eco.entity_transfer(ts)
        txs.append(tx)
    while b < len(boundaries):
        snapshots.append(BalanceSnapshot(boundaries[b], dict(eco.balances)))
        b += 1
    prices = synthetic_prices(rng, start_ns, end_ns)
    return DemoLedger(txs, snapshots, DEMO_LABELS, start_ns, end_ns, prices)


def synthetic_prices(rng, start: int, end: int) -> dict[str, list[tuple[str, float]]]:
    """Daily BTC and HBAR closes; HBAR loads on BTC's log-returns plus idiosyncratic noise."""
    days = range(start, end, NANOS_PER_DAY)
    btc, hbar = math.log(10_000.0), math.log(0.04)
    out = {"btc_usd": [], "hbar_usd": []}
    for d in days:
        shock = rng.normal(0, 0.03)
        btc += shock
        hbar += 1.2 * shock + rng.normal(0, 0.01)
        out["btc_usd"].append((ns_to_date_str(d), round(math.exp(btc), 2)))
        out["hbar_usd"].append((ns_to_date_str(d), round(math.exp(hbar), 6)))
    return out


def write_demo(ledger: DemoLedger, outdir, record_cap: int = 5_000, fixture_page: int = 1_000) -> dict:
    """Write the archive, labels, price CSVs and mirror-shaped fixtures under ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    archive = out / "archive"
    segments = write_archive(ledger.transactions, archive, record_cap)
    for snap in ledger.snapshots:
        write_snapshot(archive, snap)
    (out / "labels.txt").write_text(format_label_file(ledger.labels))
    prices = out / "prices"
    prices.mkdir(exist_ok=True)
    for name, rows in ledger.prices.items():
        (prices / f"{name}.csv").write_text("date,price\n" + "".join(f"{d},{p!r}\n" for d, p in rows))
    fixtures = out / "fixtures"
    fixtures.mkdir(exist_ok=True)
    txs = ledger.transactions
    for i in range(0, len(txs), fixture_page):
        page = {"transactions": [transaction_to_dict(t) for t in txs[i:i + fixture_page]],
                "links": {"next": None}}
        (fixtures / f"transactions-{i // fixture_page:04d}.json").write_text(
            json.dumps(page, separators=(",", ":")) + "\n")
    for snap in ledger.snapshots:
        (fixtures / f"balances-{ns_to_date_str(snap.timestamp)}.json").write_text(
            json.dumps(snapshot_to_dict(snap), separators=(",", ":")) + "\n")
    return {"archive": str(archive), "segments": len(segments), "transactions": len(txs),
            "snapshots": len(ledger.snapshots)}
