"""Degree-distribution and core/periphery structure of transaction networks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_degrees
from .errors import DegenerateSampleError, InsufficientDataError
from .graph import MetricSeries, TxGraph

DEFAULT_MIN_TAIL = 50
_ALPHA_MAX = 50.0


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    xmin: int
    n_tail: int
    ks_distance: float

    def to_dict(self) -> dict:
        return asdict(self)


def _closed_form_alpha(tail: np.ndarray, xmin: int) -> float:
    """Continuous approximation to the discrete MLE; good for xmin >~ 6, biased below."""
    return 1.0 + tail.size / float(np.sum(np.log(tail / (xmin - 0.5))))


def discrete_mle(tail: np.ndarray, xmin: int) -> float:
    """Exact maximum-likelihood exponent of a discrete power law on ``tail >= xmin``.

    Minimises ``n ln zeta(a, xmin) + a sum(ln x)``, which is convex in ``a``.
    """
    n = tail.size
    sum_log = float(np.sum(np.log(tail)))

    def nll(a):
        return n * math.log(zeta(a, xmin)) + a * sum_log

    guess = _closed_form_alpha(tail, xmin)
    upper = min(_ALPHA_MAX, max(4.0, 3.0 * guess))
    res = minimize_scalar(nll, bounds=(1.0 + 1e-9, upper), method="bounded",
                          options={"xatol": 1e-9})
    return float(res.x)


def ks_distance(tail: np.ndarray, alpha: float, xmin: int) -> float:
    """Largest gap between the empirical and fitted CDFs over the tail's support."""
    values, counts = np.unique(tail, return_counts=True)
    emp_cdf = np.cumsum(counts) / tail.size
    model_cdf = 1.0 - zeta(alpha, values + 1.0) / zeta(alpha, xmin)
    return float(np.max(np.abs(emp_cdf - model_cdf)))


class PowerLawFitter(BaseEstimator):
    """Discrete power-law fit of a degree sample.

    With ``xmin=None`` every observed value leaving at least ``min_tail``
    samples is tried as the lower cutoff, and the one minimising the KS
    distance wins. An integer ``xmin`` fixes the cutoff.

    Attributes set by ``fit``: ``alpha_``, ``xmin_``, ``n_tail_``,
    ``ks_distance_``.
    """

    def __init__(self, xmin: int | None = None, min_tail: int = DEFAULT_MIN_TAIL):
        self.xmin = xmin
        self.min_tail = min_tail

    def _fit_at(self, x: np.ndarray, xmin: int) -> PowerLawFit | None:
        tail = x[x >= xmin]
        if tail.size < self.min_tail:
            return None
        if tail.max() == tail.min():
            return None
        alpha = discrete_mle(tail.astype(np.float64), xmin)
        return PowerLawFit(alpha, int(xmin), int(tail.size), ks_distance(tail, alpha, xmin))

    def fit(self, X, y=None):
        x = np.sort(check_degrees(X))  # fixed summation order: exact permutation invariance
        if x.max() == x.min():
            raise DegenerateSampleError(f"all {x.size} degrees equal {x[0]}")
        if self.xmin is not None:
            if int(self.xmin) < 1:
                raise ValueError("xmin must be >= 1")
            tail = x[x >= self.xmin]
            if tail.size < self.min_tail:
                raise InsufficientDataError(
                    f"{tail.size} samples >= xmin={self.xmin}, need {self.min_tail}")
            best = self._fit_at(x, int(self.xmin))
            if best is None:
                raise DegenerateSampleError(f"tail above xmin={self.xmin} is constant")
        else:
            best = None
            for cand in np.unique(x):
                fit = self._fit_at(x, int(cand))
                if fit is None:
                    if np.count_nonzero(x >= cand) < self.min_tail:
                        break
                    continue
                if best is None or fit.ks_distance < best.ks_distance:
                    best = fit
            if best is None:
                raise InsufficientDataError(
                    f"no cutoff leaves {self.min_tail} non-constant tail samples")
        self.fit_ = best
        self.alpha_, self.xmin_ = best.alpha, best.xmin
        self.n_tail_, self.ks_distance_ = best.n_tail, best.ks_distance
        return self

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per tail sample under the fitted law."""
        if not hasattr(self, "alpha_"):
            raise NotFittedError("PowerLawFitter is not fitted")
        x = check_degrees(X)
        tail = x[x >= self.xmin_].astype(np.float64)
        if tail.size == 0:
            return float("-inf")
        return float(-self.alpha_ * np.mean(np.log(tail)) - math.log(zeta(self.alpha_, self.xmin_)))


def fit_power_law(degrees, xmin: int | None = None, min_tail: int = DEFAULT_MIN_TAIL) -> PowerLawFit:
    return PowerLawFitter(xmin=xmin, min_tail=min_tail).fit(degrees).fit_


def sample_discrete_power_law(alpha: float, n: int, xmin: int = 1, rng=None,
                              table_size: int = 1_000_000) -> np.ndarray:
    """Draw from ``P(x) = x^-alpha / zeta(alpha, xmin)`` for integers ``x >= xmin``.

    Inverse-CDF lookup over an exact tabulated CDF; the rare draws beyond the
    table use the continuous approximation, which is accurate that far out.
    """
    rng = np.random.default_rng(rng)
    support = np.arange(xmin, xmin + table_size, dtype=np.float64)
    cdf = np.cumsum(support ** -alpha) / zeta(alpha, xmin)
    u = rng.random(n)
    idx = np.searchsorted(cdf, u, side="right")
    out = (xmin + np.minimum(idx, table_size - 1)).astype(np.int64)
    beyond = idx >= table_size
    if beyond.any():
        x0 = xmin + table_size - 0.5
        tail_u = rng.random(int(beyond.sum()))
        out[beyond] = np.floor(x0 * (1 - tail_u) ** (-1 / (alpha - 1)) + 0.5).astype(np.int64)
    return out


# -- core / periphery ---------------------------------------------------------------

@dataclass(frozen=True)
class CorePartition:
    core: frozenset
    periphery: frozenset
    objective: int

    @property
    def core_fraction(self) -> float:
        n = len(self.core) + len(self.periphery)
        return len(self.core) / n if n else 0.0

    def to_dict(self) -> dict:
        return {
            "core": sorted(str(v) for v in self.core),
            "core_size": len(self.core),
            "n_nodes": len(self.core) + len(self.periphery),
            "core_fraction": self.core_fraction,
            "objective": self.objective,
        }


def degree_order(g: TxGraph) -> list:
    """Nodes by descending degree, ties broken by ascending node id."""
    deg = g.degree
    return sorted(deg, key=lambda v: (-deg[v], v))


def prefix_objectives(g: TxGraph, order: Sequence | None = None) -> np.ndarray:
    """Z(k) for k = 1..N when the first k nodes of ``order`` form the core.

    Z counts missing core-core edges plus present periphery-periphery edges,
    updated in O(deg v) as each node joins the core.
    """
    order = degree_order(g) if order is None else list(order)
    pos = {v: i for i, v in enumerate(order)}
    nbrs = g.neighbors
    e_cc, e_pp = 0, g.n_edges
    z = np.empty(len(order), dtype=np.int64)
    for i, v in enumerate(order):
        into_core = sum(1 for u in nbrs[v] if pos[u] < i)
        e_cc += into_core
        e_pp -= len(nbrs[v]) - into_core
        k = i + 1
        z[i] = k * (k - 1) // 2 - e_cc + e_pp
    return z


class CorePeripheryPartitioner(BaseEstimator):
    """Two-block core/periphery split restricted to degree-ordered prefixes.

    ``fit(graph)`` scans every prefix size and keeps the smallest core
    reaching the minimum violation count. Fitted attributes: ``core_``,
    ``periphery_``, ``objective_``, ``core_fraction_``, ``order_`` and
    ``objectives_`` (Z for each prefix size).
    """

    def fit(self, X: TxGraph, y=None):
        if not isinstance(X, TxGraph):
            raise TypeError(f"expected a TxGraph, got {type(X).__name__}")
        order = degree_order(X)
        if not order:
            raise InsufficientDataError("core/periphery split of an empty graph")
        z = prefix_objectives(X, order)
        k = int(np.argmin(z)) + 1  # argmin returns the first, i.e. smallest, minimiser
        self.order_ = order
        self.objectives_ = z
        self.partition_ = CorePartition(frozenset(order[:k]), frozenset(order[k:]), int(z[k - 1]))
        self.core_ = self.partition_.core
        self.periphery_ = self.partition_.periphery
        self.objective_ = self.partition_.objective
        self.core_fraction_ = self.partition_.core_fraction
        return self

    def predict(self, X) -> np.ndarray:
        """True for core members among the given nodes."""
        if not hasattr(self, "core_"):
            raise NotFittedError("CorePeripheryPartitioner is not fitted")
        return np.array([v in self.core_ for v in X], dtype=bool)

    def fit_predict(self, X: TxGraph, y=None) -> np.ndarray:
        return self.fit(X).predict(self.order_)


def core_periphery(g: TxGraph) -> CorePartition:
    return CorePeripheryPartitioner().fit(g).partition_


def core_fraction_series(graphs: Iterable[TxGraph], cohort_filter=None,
                         name: str = "core_fraction") -> MetricSeries:
    """Core share per window; ``cohort_filter`` accounts are removed first. Empty windows are gaps."""
    drop = frozenset(cohort_filter) if cohort_filter is not None else frozenset()
    points = []
    for g in graphs:
        h = g.without(drop) if drop else g
        points.append((g.window.start, core_periphery(h).core_fraction if h.n_edges else None))
    return MetricSeries(name, points)
