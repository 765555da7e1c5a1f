"""Ledger domain types shared by every other module.

Amounts are integers in tinybars throughout; conversion to HBAR happens only
inside metric evaluation. Timestamps are integer nanoseconds since the Unix
epoch, the resolution mirror nodes report consensus time in.
"""

from __future__ import annotations

import enum
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .errors import AccountIdError, ConfigurationError, DataError, IntegrityError, OrderingError

logger = logging.getLogger(__name__)

TINYBARS_PER_HBAR = 10**8
MAX_SUPPLY_HBAR = 50 * 10**9
MAX_SUPPLY = MAX_SUPPLY_HBAR * TINYBARS_PER_HBAR

NANOS_PER_SECOND = 10**9
NANOS_PER_DAY = 86_400 * NANOS_PER_SECOND
NANOS_PER_WEEK = 7 * NANOS_PER_DAY

_ACCOUNT_RE = re.compile(r"(0|[1-9][0-9]*)")


@dataclass(frozen=True, order=True)
class AccountId:
    shard: int
    realm: int
    num: int

    def __post_init__(self):
        for part in (self.shard, self.realm, self.num):
            if not isinstance(part, int) or part < 0:
                raise ValueError(f"account id parts must be non-negative ints, got {part!r}")

    def __str__(self):
        return f"{self.shard}.{self.realm}.{self.num}"


def parse_account_id(text: str) -> AccountId:
    """Parse ``shard.realm.num``. Leading zeros are rejected so formatting round-trips."""
    if isinstance(text, AccountId):
        return text
    tokens = str(text).split(".")
    if len(tokens) != 3:
        raise AccountIdError(text, text)
    for tok in tokens:
        if not _ACCOUNT_RE.fullmatch(tok):
            raise AccountIdError(text, tok)
    return AccountId(*(int(t) for t in tokens))


def format_account_id(account: AccountId) -> str:
    return str(account)


# -- timestamps ---------------------------------------------------------------

def parse_timestamp(text) -> int:
    """``"1568411631.396440000"`` -> nanoseconds. Integers pass through."""
    if isinstance(text, int):
        return text
    s = str(text).strip()
    secs, _, frac = s.partition(".")
    if not secs.isdigit() or (frac and not frac.isdigit()) or len(frac) > 9:
        raise DataError(f"malformed consensus timestamp {text!r}")
    return int(secs) * NANOS_PER_SECOND + int(frac.ljust(9, "0") or 0)


def format_timestamp(ns: int) -> str:
    secs, nanos = divmod(ns, NANOS_PER_SECOND)
    return f"{secs}.{nanos:09d}"


def to_ns(value) -> int:
    """Accept ns ints, ``YYYY-MM-DD``, ISO datetimes (UTC if naive) or ``s.nanos`` strings."""
    if isinstance(value, int):
        return value
    if isinstance(value, datetime):
        dt = value if value.tzinfo else value.replace(tzinfo=timezone.utc)
        return int(dt.timestamp()) * NANOS_PER_SECOND + dt.microsecond * 1000
    if isinstance(value, date):
        return to_ns(datetime(value.year, value.month, value.day, tzinfo=timezone.utc))
    s = str(value).strip()
    if re.fullmatch(r"\d+(\.\d+)?", s) and len(s.partition(".")[0]) > 8:
        return parse_timestamp(s)
    try:
        dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError:
        raise ConfigurationError(f"unrecognised time value {value!r}") from None
    return to_ns(dt)


def ns_to_datetime(ns: int) -> datetime:
    return datetime.fromtimestamp(ns // NANOS_PER_SECOND, tz=timezone.utc)


def ns_to_date_str(ns: int) -> str:
    return ns_to_datetime(ns).strftime("%Y-%m-%d")


def floor_day(ns: int) -> int:
    return ns - ns % NANOS_PER_DAY


def add_months(ns: int, months: int) -> int:
    """Same calendar day ``months`` later (clamped to month end), UTC."""
    dt = ns_to_datetime(ns)
    m = dt.month - 1 + months
    year, month = dt.year + m // 12, m % 12 + 1
    for day in (dt.day, 30, 29, 28):
        try:
            moved = dt.replace(year=year, month=month, day=day)
            break
        except ValueError:
            continue
    return to_ns(moved) + ns % NANOS_PER_SECOND


DEFAULT_EPOCH = to_ns("2019-09-13")


# -- transactions -------------------------------------------------------------

@dataclass(frozen=True)
class Transfer:
    account: AccountId
    amount: int

    def __post_init__(self):
        if self.amount == 0:
            raise ValueError("zero-amount transfer legs are not representable")


@dataclass(frozen=True)
class Transaction:
    consensus_timestamp: int
    name: str
    result: str = "SUCCESS"
    transfers: tuple[Transfer, ...] = ()

    @property
    def successful(self) -> bool:
        return self.result == "SUCCESS"

    @property
    def residual(self) -> int:
        return sum(t.amount for t in self.transfers)

    def accounts(self) -> set[AccountId]:
        return {t.account for t in self.transfers}


def make_transaction(consensus_timestamp, name, transfers, result="SUCCESS") -> Transaction:
    """Convenience constructor taking ``(account, amount)`` pairs; zero legs are dropped."""
    legs = tuple(
        Transfer(parse_account_id(a), int(amt)) for a, amt in transfers if int(amt) != 0
    )
    return Transaction(parse_timestamp(consensus_timestamp), name, result, legs)


def validate_transaction(tx: Transaction, strict_zero_sum: bool = False,
                         stats: Counter | None = None) -> Transaction:
    """Check double-entry balance and return ``tx`` with transfers sorted by account.

    Under ``strict_zero_sum`` an unbalanced transaction raises
    :class:`IntegrityError`; otherwise it passes through and
    ``stats["unbalanced"]`` is incremented.
    """
    residual = tx.residual
    if residual != 0:
        if strict_zero_sum:
            raise IntegrityError(tx.consensus_timestamp, residual)
        if stats is not None:
            stats["unbalanced"] += 1
        logger.warning("unbalanced transaction at %s (residual %d)",
                       format_timestamp(tx.consensus_timestamp), residual)
    ordered = tuple(sorted(tx.transfers, key=lambda t: t.account))
    if ordered == tx.transfers:
        return tx
    return Transaction(tx.consensus_timestamp, tx.name, tx.result, ordered)


def check_consensus_order(transactions: Iterable[Transaction]) -> Iterator[Transaction]:
    """Pass through ``transactions``, raising OrderingError on a non-increasing timestamp."""
    prev = None
    for tx in transactions:
        if prev is not None and tx.consensus_timestamp <= prev:
            raise OrderingError(format_timestamp(prev), format_timestamp(tx.consensus_timestamp))
        prev = tx.consensus_timestamp
        yield tx


# -- balances -----------------------------------------------------------------

@dataclass(frozen=True)
class BalanceSnapshot:
    timestamp: int
    balances: Mapping[AccountId, int]

    def __post_init__(self):
        balances = dict(self.balances)
        negative = [a for a, b in balances.items() if b < 0]
        if negative:
            raise DataError(f"negative balance for {negative[0]} at {format_timestamp(self.timestamp)}")
        if sum(balances.values()) > MAX_SUPPLY:
            raise DataError(f"snapshot at {format_timestamp(self.timestamp)} exceeds max supply")
        object.__setattr__(self, "balances", MappingProxyType(balances))

    @property
    def total(self) -> int:
        return sum(self.balances.values())


# -- windows ------------------------------------------------------------------

class Cadence(str, enum.Enum):
    DAILY = "daily"
    WEEKLY = "weekly"

    @property
    def length(self) -> int:
        return NANOS_PER_DAY if self is Cadence.DAILY else NANOS_PER_WEEK


@dataclass(frozen=True, order=True)
class TimeWindow:
    start: int
    end: int
    cadence: Cadence = Cadence.WEEKLY

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty time window [{self.start}, {self.end})")
        object.__setattr__(self, "cadence", Cadence(self.cadence))

    def __contains__(self, ns) -> bool:
        return self.start <= ns < self.end

    @property
    def label(self) -> str:
        return ns_to_date_str(self.start)


def make_windows(start: int, end: int, cadence="weekly", anchor: int | None = None) -> list[TimeWindow]:
    """Tile ``[start, end)`` with gap-free windows aligned to ``anchor``.

    The anchor defaults to ``start`` floored to 00:00 UTC. Windows that
    only partially overlap the range are kept whole.
    """
    cadence = Cadence(cadence)
    if end <= start:
        return []
    step = cadence.length
    if anchor is None:
        anchor = floor_day(start)
    first = anchor + ((start - anchor) // step) * step
    return [TimeWindow(t, t + step, cadence) for t in range(first, end, step)]


# -- labels -------------------------------------------------------------------

class Label(str, enum.Enum):
    TREASURY = "Treasury"
    HBAR_FOUNDATION = "HbarFoundation"
    SWIRLDS = "Swirlds"
    FEE_ACCOUNT = "FeeAccount"
    STAKING_REWARD = "StakingReward"
    OTHER = "Other"

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = re.sub(r"[\s_-]", "", text).lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ConfigurationError(f"unknown entity label {text!r}")


# accounts the transaction graph skips by default
SERVICE_LABELS = frozenset({Label.FEE_ACCOUNT, Label.STAKING_REWARD})


@dataclass(frozen=True)
class EntityLabelSet:
    labels: Mapping[AccountId, Label] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "labels", MappingProxyType(
            {parse_account_id(a): Label(l) for a, l in dict(self.labels).items()}))

    def label_of(self, account: AccountId) -> Label:
        return self.labels.get(account, Label.OTHER)

    def accounts_with(self, *labels: Label) -> frozenset[AccountId]:
        wanted = set(labels)
        return frozenset(a for a, l in self.labels.items() if l in wanted)

    def is_public(self, account: AccountId) -> bool:
        return self.label_of(account) not in (Label.TREASURY, Label.HBAR_FOUNDATION)

    def require(self, label: Label, metric: str) -> frozenset[AccountId]:
        accounts = self.accounts_with(label)
        if not accounts:
            raise ConfigurationError(f"{metric} requires at least one account labelled {label.value}")
        return accounts

    def __len__(self):
        return len(self.labels)


def parse_label_text(text: str) -> EntityLabelSet:
    labels = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigurationError(f"label file line {lineno}: expected '<account-id> <label>'")
        account = parse_account_id(parts[0])
        if account in labels:
            raise ConfigurationError(f"label file line {lineno}: {account} labelled twice")
        labels[account] = Label.parse(parts[1])
    return EntityLabelSet(labels)


def read_label_file(path) -> EntityLabelSet:
    return parse_label_text(Path(path).read_text())


def format_label_file(labels: EntityLabelSet) -> str:
    return "".join(f"{a} {l.value}\n" for a, l in sorted(labels.labels.items()))


def default_labels() -> EntityLabelSet:
    """The bundled label file. Its IDs are placeholders, supply your own for real data."""
    return parse_label_text(resources.files("hbarscope").joinpath("data/labels.txt").read_text())
