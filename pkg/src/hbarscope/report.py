"""Report emission: every figure series as a CSV table, plus JSON summaries.

Output is plain text written in a fixed order with ``repr`` floats, so the
same (config, archive) pair always regenerates byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError, UndefinedMetricError
from .graph import (
    Cohort,
    MetricSeries,
    active_accounts,
    birth_dates,
    build_graphs,
    early_user_cohorts,
    released_supply,
    tx_counts_by_category,
)
from .ingest.archive import archive_span, load_manifest, read_archive, read_snapshots
from .metrics import (
    NAKAMOTO_THRESHOLDS,
    assortativity,
    log_returns,
    pearson,
    read_price_csv,
    weekly_wealth_metrics,
)
from .model import (
    TINYBARS_PER_HBAR,
    EntityLabelSet,
    floor_day,
    make_windows,
    ns_to_date_str,
    read_label_file,
    to_ns,
)
from .structure import PowerLawFitter, core_periphery

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
WEALTH_GROUPS = ("All", "Public", "EarlyUsers1M", "NotEarlyUsers1M", "EarlyUsers1Y", "NotEarlyUsers1Y")
GRAPH_GROUPS = ("All", "NotEarlyUsers1M", "NotEarlyUsers1Y")
SUMMARY_STATS = ("Minimum", "1. Quartile", "Median", "3. Quartile", "Maximum")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def series_table(series: dict[str, MetricSeries], columns=None) -> tuple[list, list]:
    """Align series on their timestamps; the first column is the UTC date."""
    columns = list(series) if columns is None else list(columns)
    times = sorted({t for name in columns for t in series[name].times})
    lookup = {name: dict(series[name].points) for name in columns}
    rows = [[ns_to_date_str(t)] + [lookup[c].get(t) for c in columns] for t in times]
    return ["date"] + columns, rows


def hbar_decimal(tinybars: int | None) -> str | None:
    """Exact HBAR amount as a decimal string."""
    if tinybars is None:
        return None
    whole, frac = divmod(abs(tinybars), TINYBARS_PER_HBAR)
    return f"{'-' if tinybars < 0 else ''}{whole}.{frac:08d}"


def summary_statistics(values) -> dict[str, float | None]:
    """Min, quartiles, median and max, as in a five-number summary table."""
    x = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if x.size == 0:
        return {k: None for k in SUMMARY_STATS}
    q = np.percentile(x, [0, 25, 50, 75, 100])
    return {k: float(v) for k, v in zip(SUMMARY_STATS, q)}


class _Inputs:
    """Everything the report reads, loaded once."""

    def __init__(self, config: RunConfig):
        store = config.path("archive")
        if not (store / "manifest.json").exists():
            raise ConfigurationError(f"no archive manifest under {store}")
        self.store = store
        self.labels = read_label_file(config.path("labels")) if config.labels else EntityLabelSet({})
        span = archive_span(store)
        history = list(read_archive(store)) if span else []
        self.births = birth_dates(history)
        self.start = to_ns(config.start) if config.start else (floor_day(span[0]) if span else None)
        self.end = to_ns(config.end) if config.end else (floor_day(span[1]) + 86_400 * 10**9 if span else None)
        if self.start is None or self.end is None or self.end <= self.start:
            self.transactions, self.snapshots, self.windows = [], [], []
        else:
            self.transactions = [t for t in history if self.start <= t.consensus_timestamp < self.end]
            # a snapshot at the range end describes the last window
            self.snapshots = read_snapshots(store, self.start, self.end + 1)
            self.windows = make_windows(self.start, self.end, config.cadence)
        if config.period_start:
            self.period_start = to_ns(config.period_start)
        else:
            self.period_start = floor_day(span[0]) if span else 0
        self.cohorts = early_user_cohorts(self.births, self.period_start)


def _graph_filters(cohorts) -> dict[str, frozenset]:
    return {
        "All": frozenset(),
        "NotEarlyUsers1M": cohorts[Cohort.EARLY_1M].members,
        "NotEarlyUsers1Y": cohorts[Cohort.EARLY_1Y].members,
    }


def power_law_record(degrees, xmin, min_tail):
    try:
        f = PowerLawFitter(xmin=xmin, min_tail=min_tail).fit(degrees).fit_
        return f.to_dict(), ""
    except UndefinedMetricError as exc:
        return None, type(exc).__name__
    except ValueError as exc:
        return None, str(exc)


class ReportBuilder:
    """Computes and writes every enabled table for one configuration."""

    def __init__(self, config: RunConfig, outdir=None):
        self.config = config
        self.outdir = Path(outdir) if outdir is not None else config.path("output_dir")
        self.files: list[Path] = []

    def _csv(self, name, header, rows):
        self.files.append(write_csv(self.outdir / f"{name}.csv", header, rows))

    def run(self) -> dict:
        cfg = self.config
        self.outdir.mkdir(parents=True, exist_ok=True)
        data = _Inputs(cfg)
        enabled = set(cfg.metrics)
        structure = {}
        if "tx_counts" in enabled:
            self.tx_counts(data)
        if "active_accounts" in enabled:
            self.active_accounts(data)
        if "released_supply" in enabled:
            self.released_supply(data)
        if enabled & {"assortativity", "core_fraction", "power_law"}:
            structure = self.graph_metrics(data, enabled)
        if "wealth" in enabled:
            self.wealth(data)
        if "correlation" in enabled and cfg.hbar_prices:
            self.correlation(data)
        if structure:
            self.files.append(write_json(self.outdir / "structure.json", structure))
        return self.summary(data)

    def tx_counts(self, data):
        series = tx_counts_by_category(data.transactions, data.labels, data.start, data.end)
        header, rows = series_table(series) if data.windows else (["date"], [])
        self._csv("tx_counts_by_category", header, rows)

    def active_accounts(self, data):
        series = {}
        for cohort in (Cohort.ALL, Cohort.EARLY_1M, Cohort.EARLY_1Y):
            c = None if cohort is Cohort.ALL else data.cohorts[cohort]
            parts = active_accounts(data.transactions, c, data.start, data.end, data.births) \
                if data.windows else {}
            for k, s in parts.items():
                series[f"{k}[{cohort.value}]"] = s
        cols = [f"{k}[{c.value}]" for c in (Cohort.ALL, Cohort.EARLY_1M, Cohort.EARLY_1Y)
                for k in ("active", "cumulative", "active_pct")]
        header, rows = series_table(series, cols) if series else (["date"] + cols, [])
        self._csv("active_accounts", header, rows)

    def released_supply(self, data):
        series = released_supply(data.snapshots, data.labels, data.births, data.period_start)
        cols = ["released", "born_after_first_year"]
        header, rows = series_table(series, cols)
        rows = [[r[0]] + [hbar_decimal(v) for v in r[1:]] for r in rows]
        self._csv("released_supply", ["date", "released_hbar", "born_after_first_year_hbar"], rows)

    def graph_metrics(self, data, enabled) -> dict:
        cfg = self.config
        graphs = build_graphs(data.transactions, data.windows, workers=cfg.workers,
                              labels=data.labels, exclude_labels=cfg.excluded_labels)
        filters = _graph_filters(data.cohorts)
        assort_rows, core_rows, pl_rows = [], [], []
        structure = {}
        alphas = {"ks": [], "xmin1": []}
        for g in graphs:
            day = ns_to_date_str(g.window.start)
            record = {"window_start": day, "n_nodes": g.n_nodes, "n_edges": g.n_edges}
            a_row, c_row = [day], [day]
            partitions = {}
            for name, drop in filters.items():
                h = g.without(drop) if drop else g
                a_row.append(assortativity(h) if h.n_edges else None)
                if h.n_edges:
                    part = core_periphery(h)
                    c_row.append(part.core_fraction)
                    partitions[name] = {k: v for k, v in part.to_dict().items() if k != "core"}
                else:
                    c_row.append(None)
                    partitions[name] = None
            assort_rows.append(a_row)
            core_rows.append(c_row)
            if "core_fraction" in enabled:
                record["core_periphery"] = partitions
            if "power_law" in enabled:
                degrees = g.degrees()
                fits = {}
                row = [day, g.n_nodes]
                for mode, xmin in (("ks", None), ("xmin1", 1)):
                    fit, status = power_law_record(degrees, xmin, cfg.min_tail) if degrees.size \
                        else (None, "EmptyGraph")
                    fits[mode] = fit if fit else {"status": status}
                    alphas[mode].append(fit["alpha"] if fit else None)
                    row += ([fit["alpha"], fit["xmin"], fit["n_tail"], fit["ks_distance"], ""]
                            if fit else [None, None, None, None, status])
                pl_rows.append(row)
                record["power_law"] = fits
            structure[day] = record
        if "assortativity" in enabled:
            self._csv("assortativity", ["date", *GRAPH_GROUPS], assort_rows)
        if "core_fraction" in enabled:
            self._csv("core_fraction", ["date", *GRAPH_GROUPS], core_rows)
        if "power_law" in enabled:
            cols = ["alpha", "xmin", "n_tail", "ks_distance", "status"]
            header = ["date", "n_nodes"] + [f"{c}_{m}" for m in ("ks", "xmin1") for c in cols]
            self._csv("power_law", header, pl_rows)
            stats = {m: summary_statistics(v) for m, v in alphas.items()}
            self._csv("power_law_summary", ["statistic", "alpha_ks", "alpha_xmin1"],
                      [[k, stats["ks"][k], stats["xmin1"][k]] for k in SUMMARY_STATS])
        return structure if ("core_fraction" in enabled or "power_law" in enabled) else {}

    def wealth(self, data):
        cfg = self.config
        series = weekly_wealth_metrics(data.snapshots, data.labels, data.births, data.period_start,
                                       cfg.min_balance, cfg.excluded_labels, NAKAMOTO_THRESHOLDS,
                                       WEALTH_GROUPS)
        tables = {
            "gini": ["gini"],
            "theil": ["theil_t"],
            "nakamoto": [f"{m}({s.numerator}/{s.denominator})" for s in NAKAMOTO_THRESHOLDS
                         for m in ("nakamoto", "nakamoto_frac")],
        }
        for fname, metrics in tables.items():
            cols = [f"{m}[{g}]" for m in metrics for g in WEALTH_GROUPS]
            header, rows = series_table(series, cols)
            self._csv(fname, header, rows)

    def correlation(self, data):
        cfg = self.config
        header = ["series_a", "series_b", "n_points", "pearson"]
        if not data.windows:
            self._csv("correlation", header, [])
            return
        lo, hi = data.start, data.end

        def clip(s):
            return MetricSeries(s.name, [p for p in s.points if lo <= p[0] < hi])

        hbar = clip(read_price_csv(cfg.path("hbar_prices"), "hbar_usd"))
        pairs = []
        if cfg.btc_prices:
            btc = clip(read_price_csv(cfg.path("btc_prices"), "btc_usd"))
            pairs += [("hbar_usd", "btc_usd", hbar, btc),
                      ("hbar_logret", "btc_logret", log_returns(hbar), log_returns(btc))]
        counts = tx_counts_by_category(data.transactions, data.labels, lo, hi)["successful"]
        pairs.append(("hbar_logret", "tx_successful", log_returns(hbar), counts))
        rows = []
        for a_name, b_name, a, b in pairs:
            n = len(set(a.defined().times) & set(b.defined().times))
            try:
                r = pearson(a, b)
            except UndefinedMetricError:
                r = None
            rows.append([a_name, b_name, n, r])
        self._csv("correlation", header, rows)

    def summary(self, data) -> dict:
        manifest = load_manifest(data.store)
        files = {p.name: "sha256:" + hashlib.sha256(p.read_bytes()).hexdigest()
                 for p in sorted(self.files, key=lambda p: p.name)}
        summary = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "range": {"start": ns_to_date_str(data.start) if data.start is not None else None,
                      "end": ns_to_date_str(data.end) if data.end is not None else None},
            "archive": {"segments": len(manifest.get("segments", [])),
                        "transactions": len(data.transactions),
                        "snapshots": len(data.snapshots)},
            "windows": len(data.windows),
            "files": files,
        }
        write_json(self.outdir / "summary.json", summary)
        return summary


def run_report(config: RunConfig, outdir=None) -> dict:
    """Write the report for ``config``; returns the summary record."""
    return ReportBuilder(config, outdir).run()


def load_summary_config(path) -> RunConfig:
    """Rebuild the run configuration echoed in a ``summary.json``."""
    summary = json.loads(Path(path).read_text())
    if summary.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ConfigurationError(f"{path}: unsupported summary schema {summary.get('schema_version')!r}")
    return RunConfig.from_dict(summary["config"])
