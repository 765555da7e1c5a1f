"""Canonical JSON forms for transactions and balance snapshots.

One transaction per line, keys in a fixed order, no whitespace:

    {"consensus_timestamp":"1568411631.396440000","name":"CRYPTOTRANSFER",
     "result":"SUCCESS","transfers":[{"account":"0.0.98","amount":-100}]}

Mirror-node responses carry many more fields; ``parse_transaction`` keeps
only these four.
"""

from __future__ import annotations

import json

from ..errors import DataError
from ..model import (
    BalanceSnapshot,
    Transaction,
    Transfer,
    format_timestamp,
    parse_account_id,
    parse_timestamp,
)


class RecordError(DataError):
    def __init__(self, message, raw=None):
        self.raw = raw
        super().__init__(message)


def transaction_to_dict(tx: Transaction) -> dict:
    return {
        "consensus_timestamp": format_timestamp(tx.consensus_timestamp),
        "name": tx.name,
        "result": tx.result,
        "transfers": [{"account": str(t.account), "amount": t.amount} for t in tx.transfers],
    }


def dumps_transaction(tx: Transaction) -> str:
    return json.dumps(transaction_to_dict(tx), separators=(",", ":"))


def parse_transaction(obj) -> Transaction:
    """Build a Transaction from a mirror-node or canonical record (dict or JSON text)."""
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise RecordError(f"invalid JSON: {exc}", obj) from None
    if not isinstance(obj, dict):
        raise RecordError("record is not a JSON object", obj)
    try:
        ts = parse_timestamp(obj["consensus_timestamp"])
        name = obj["name"]
        result = obj.get("result", "SUCCESS")
        legs = []
        for leg in obj.get("transfers") or ():
            amount = leg["amount"]
            if isinstance(amount, bool) or not isinstance(amount, int):
                raise RecordError(f"non-integer amount {amount!r}", obj)
            if amount:
                legs.append(Transfer(parse_account_id(leg["account"]), amount))
    except RecordError:
        raise
    except (KeyError, TypeError, DataError, ValueError) as exc:
        raise RecordError(f"malformed transaction record: {exc!r}", obj) from None
    if not isinstance(name, str) or not isinstance(result, str):
        raise RecordError("name and result must be strings", obj)
    return Transaction(ts, name, result, tuple(legs))


def snapshot_to_dict(snapshot: BalanceSnapshot) -> dict:
    return {
        "timestamp": format_timestamp(snapshot.timestamp),
        "balances": [
            {"account": str(a), "balance": b} for a, b in sorted(snapshot.balances.items())
        ],
    }


def dumps_snapshot(snapshot: BalanceSnapshot) -> str:
    return json.dumps(snapshot_to_dict(snapshot), separators=(",", ":")) + "\n"


def parse_snapshot(obj, at: int | None = None) -> BalanceSnapshot:
    """Parse a mirror ``/balances`` page or a stored snapshot file. Zero balances are dropped."""
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        ts = at if at is not None else parse_timestamp(obj["timestamp"])
        balances = {}
        for row in obj["balances"]:
            bal = int(row["balance"])
            if bal:
                balances[parse_account_id(row["account"])] = bal
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(f"malformed balance record: {exc!r}", obj) from None
    return BalanceSnapshot(ts, balances)
