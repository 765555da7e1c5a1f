"""Wealth-concentration and network-mixing metrics.

All wealth metrics are ratios, so they accept balances in any unit. Inputs
are usually integer tinybars and stay integral as long as possible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_threshold, check_wealth, exact_integers
from .errors import ConfigurationError, UndefinedMetricError
from .graph import Cohort, MetricSeries, TxGraph, early_user_cohorts
from .model import (
    SERVICE_LABELS,
    TINYBARS_PER_HBAR,
    AccountId,
    BalanceSnapshot,
    EntityLabelSet,
    to_ns,
)

DEFAULT_MIN_BALANCE = 10 * TINYBARS_PER_HBAR
NAKAMOTO_THRESHOLDS = (Fraction(1, 3), Fraction(1, 2))


@dataclass(frozen=True)
class WealthVector:
    """Balances of a filtered account group, plus a record of what was filtered out."""

    accounts: tuple
    balances: np.ndarray
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        bal = check_wealth(self.balances)
        if len(self.accounts) != bal.size:
            raise ValueError("accounts and balances differ in length")
        object.__setattr__(self, "balances", bal)

    @property
    def total(self):
        if self.balances.dtype.kind == "i":
            return sum(int(v) for v in self.balances)
        return math.fsum(self.balances)

    @property
    def hbar(self) -> np.ndarray:
        return self.balances / TINYBARS_PER_HBAR

    def __len__(self):
        return len(self.accounts)

    @classmethod
    def from_snapshot(cls, snapshot: BalanceSnapshot, labels: EntityLabelSet | None = None,
                      min_balance: int = DEFAULT_MIN_BALANCE, exclude_labels=SERVICE_LABELS,
                      members=None, exclude_members=None, group: str = "All") -> "WealthVector":
        """Apply the standard filters: balances <= ``min_balance`` and service accounts go.

        ``members`` keeps only the given accounts, ``exclude_members`` drops them.
        """
        excluded = labels.accounts_with(*exclude_labels) if labels is not None and exclude_labels else frozenset()
        keep = []
        for a, b in sorted(snapshot.balances.items()):
            if b <= min_balance or a in excluded:
                continue
            if members is not None and a not in members:
                continue
            if exclude_members is not None and a in exclude_members:
                continue
            keep.append((a, b))
        provenance = {
            "group": group,
            "min_balance": min_balance,
            "excluded_labels": sorted(l.value for l in exclude_labels or ()),
            "dropped": len(snapshot.balances) - len(keep),
        }
        return cls(tuple(a for a, _ in keep), np.array([b for _, b in keep], dtype=np.int64),
                   provenance)


def _values(w) -> np.ndarray:
    return w.balances if isinstance(w, WealthVector) else check_wealth(w)


def _positive_total(x: np.ndarray) -> float:
    total = float(sum(int(v) for v in x)) if x.dtype.kind == "i" else math.fsum(x)
    if total <= 0:
        raise UndefinedMetricError("total wealth is zero")
    return total


def gini(w) -> float:
    """Gini coefficient (mean absolute difference over twice the mean).

    Uses the sorted-rank identity, pairing the i-th smallest with the i-th
    largest entry so the all-equal and single-holder cases come out exact.
    """
    x = _values(w)
    n = x.size
    if n < 2:
        raise UndefinedMetricError(f"Gini needs at least 2 entries, got {n}")
    total = _positive_total(x)
    xs = np.sort(x)
    half = n // 2
    ranks = 2 * np.arange(n - half, n) + 1 - n
    if x.dtype.kind == "i":
        # exact integer numerator, then a single rounding
        hi, lo = xs[n - half:].tolist(), xs[:half][::-1].tolist()
        num = sum(r * (a - b) for r, a, b in zip(ranks.tolist(), hi, lo))
        return num / (n * sum(xs.tolist()))
    diff = (xs[n - half:] - xs[:half][::-1]).astype(np.float64) / total
    return math.fsum(ranks * diff) / n


def gini_pairwise(w) -> float:
    """O(N^2) direct evaluation of the double-sum definition."""
    x = _values(w).astype(np.float64)
    n = x.size
    if n < 2:
        raise UndefinedMetricError(f"Gini needs at least 2 entries, got {n}")
    total = _positive_total(x)
    return float(np.abs(x[:, None] - x[None, :]).sum() / (2 * n * total))


def theil_t(w) -> float:
    """Theil-T index, 0 for perfect equality and ln N for a single holder."""
    x = _values(w)
    n = x.size
    if n < 1:
        raise UndefinedMetricError("Theil-T of an empty vector")
    total = _positive_total(x)
    share = x[x > 0].astype(np.float64) / total
    t = math.fsum(share * np.log(n * share))
    return min(max(t, 0.0), math.log(n))


class NakamotoResult(NamedTuple):
    count: int
    fraction: float


def nakamoto(w, s=Fraction(1, 3)) -> NakamotoResult:
    """Fewest top holders whose combined share strictly exceeds ``s``.

    Comparisons are exact, so a cumulative share landing exactly on ``s``
    needs one more holder. ``fraction`` is ``count / n``.
    """
    s = check_threshold(s)
    x = _values(w)
    n = x.size
    ints = sorted(exact_integers(x), reverse=True)
    total = sum(ints)
    if total <= 0:
        raise UndefinedMetricError("total wealth is zero")
    bound = s.numerator * total
    cum = 0
    for k, v in enumerate(ints, 1):
        cum += v
        if cum * s.denominator > bound:
            return NakamotoResult(k, k / n)
    raise AssertionError("unreachable for s < 1")


def assortativity(g: TxGraph) -> float | None:
    """Degree correlation across edge ends; None when undefined.

    Each undirected edge contributes its degree pair symmetrically. The
    result is None for graphs without edges or with a single endpoint degree
    (regular graphs), never 0.
    """
    m = g.n_edges
    if m == 0:
        return None
    deg = g.degree
    s_jk = s_sum = s_sq = 0
    for a, b in g.edges:
        j, k = deg[a], deg[b]
        s_jk += j * k
        s_sum += j + k
        s_sq += j * j + k * k
    num = 4 * m * s_jk - s_sum * s_sum
    den = 2 * m * s_sq - s_sum * s_sum
    if den == 0:
        return None
    return num / den


def pearson(a: MetricSeries, b: MetricSeries, min_points: int = 3) -> float:
    """Sample correlation over the timestamps both series define."""
    bm = {t: v for t, v in b.points if v is not None}
    pairs = [(v, bm[t]) for t, v in a.points if v is not None and t in bm]
    if len(pairs) < min_points:
        raise UndefinedMetricError(
            f"only {len(pairs)} aligned points between {a.name!r} and {b.name!r}")
    x, y = np.array(pairs, dtype=np.float64).T
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedMetricError("correlation with a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


# -- price series ---------------------------------------------------------------

def read_price_csv(path, name: str | None = None) -> MetricSeries:
    """``date,price`` rows (UTC dates; an optional header row is skipped)."""
    points = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                price = float(row[1])
            except (ValueError, IndexError):
                if not points:
                    continue  # header
                raise ConfigurationError(f"{path}: bad price row {row!r}") from None
            points.append((to_ns(row[0].strip()), price))
    points.sort()
    return MetricSeries(name or Path(path).stem, points)


def log_returns(prices: MetricSeries) -> MetricSeries:
    pts = prices.points
    out = [(t1, math.log(p1 / p0)) for (t0, p0), (t1, p1) in zip(pts, pts[1:])]
    return MetricSeries(f"{prices.name}_logret", out)


# -- weekly wealth metrics ----------------------------------------------------

def _fmt_threshold(s: Fraction) -> str:
    return f"{s.numerator}/{s.denominator}"


def wealth_metric_names(thresholds=NAKAMOTO_THRESHOLDS) -> list[str]:
    names = ["gini", "theil_t"]
    for s in thresholds:
        names += [f"nakamoto({_fmt_threshold(s)})", f"nakamoto_frac({_fmt_threshold(s)})"]
    return names


def wealth_metrics(w, thresholds=NAKAMOTO_THRESHOLDS) -> dict[str, float | int | None]:
    """Every wealth metric for one vector; undefined ones map to None."""
    out = {}
    for name, fn in (("gini", gini), ("theil_t", theil_t)):
        try:
            out[name] = fn(w)
        except UndefinedMetricError:
            out[name] = None
    for s in thresholds:
        s = check_threshold(s)
        key = _fmt_threshold(s)
        try:
            res = nakamoto(w, s)
            out[f"nakamoto({key})"], out[f"nakamoto_frac({key})"] = res.count, res.fraction
        except UndefinedMetricError:
            out[f"nakamoto({key})"] = out[f"nakamoto_frac({key})"] = None
    return out


def account_groups(labels: EntityLabelSet, births: Mapping[AccountId, int] | None = None,
                   period_start: int | None = None) -> dict[str, dict]:
    """Group name -> WealthVector.from_snapshot keyword filters."""
    non_public = frozenset(a for a in labels.labels if not labels.is_public(a))
    groups = {"All": {}, "Public": {"exclude_members": non_public}}
    if births is not None and period_start is not None:
        cohorts = early_user_cohorts(births, period_start)
        for c in (Cohort.EARLY_1M, Cohort.EARLY_1Y):
            members = cohorts[c].members
            groups[c.value] = {"members": members}
            groups[f"Not{c.value}"] = {"exclude_members": members}
    return groups


def weekly_wealth_metrics(snapshots: Iterable[BalanceSnapshot], labels: EntityLabelSet,
                          births: Mapping[AccountId, int] | None = None,
                          period_start: int | None = None,
                          min_balance: int = DEFAULT_MIN_BALANCE, exclude_labels=SERVICE_LABELS,
                          thresholds=NAKAMOTO_THRESHOLDS, groups: Iterable[str] | None = None,
                          ) -> dict[str, MetricSeries]:
    """``"<metric>[<group>]"`` -> series over the snapshots.

    A snapshot where a metric is undefined for a group (for instance every
    account filtered out) yields a gap instead of aborting the run.
    """
    snaps = sorted(snapshots, key=lambda s: s.timestamp)
    all_groups = account_groups(labels, births, period_start)
    if groups is not None:
        unknown = set(groups) - set(all_groups)
        if unknown:
            raise ConfigurationError(f"unknown account groups {sorted(unknown)}")
        all_groups = {g: all_groups[g] for g in groups}
    names = wealth_metric_names([check_threshold(s) for s in thresholds])
    points = {f"{m}[{g}]": [] for g in all_groups for m in names}
    for snap in snaps:
        for g, kw in all_groups.items():
            w = WealthVector.from_snapshot(snap, labels, min_balance, exclude_labels, group=g, **kw)
            for m, v in wealth_metrics(w, thresholds).items():
                points[f"{m}[{g}]"].append((snap.timestamp, v))
    return {k: MetricSeries(k, v) for k, v in points.items()}


class WealthInequality(TransformerMixin, BaseEstimator):
    """Maps each wealth vector to ``[gini, theil_t, nakamoto(s) for s in thresholds]``.

    Stateless; ``fit`` only validates parameters. Undefined metrics become NaN.
    """

    def __init__(self, thresholds=NAKAMOTO_THRESHOLDS, normalize_nakamoto: bool = False):
        self.thresholds = thresholds
        self.normalize_nakamoto = normalize_nakamoto

    def fit(self, X=None, y=None):
        self.thresholds_ = tuple(check_threshold(s) for s in self.thresholds)
        self.n_features_out_ = 2 + len(self.thresholds_)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "thresholds_"):
            self.fit()
        key = "nakamoto_frac" if self.normalize_nakamoto else "nakamoto"
        rows = []
        for w in X:
            m = wealth_metrics(w, self.thresholds_)
            vals = [m["gini"], m["theil_t"]]
            vals += [m[f"{key}({_fmt_threshold(s)})"] for s in self.thresholds_]
            rows.append([np.nan if v is None else v for v in vals])
        return np.array(rows, dtype=np.float64).reshape(len(rows), 2 + len(self.thresholds_))

    def get_feature_names_out(self, input_features=None):
        if not hasattr(self, "thresholds_"):
            self.fit()
        return np.array(["gini", "theil_t"] + [f"nakamoto({_fmt_threshold(s)})"
                                               for s in self.thresholds_], dtype=object)
