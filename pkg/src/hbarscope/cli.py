"""Command-line entry point: ``hbarscope {ingest,snapshot,graph,report,demo}``.

Settings come from an optional TOML file (``--config``); flags override it.
Exit codes: 0 ok, 1 data error, 2 configuration error, 3 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig
from .errors import ConfigurationError, HbarscopeError
from .graph import build_graphs
from .ingest import ingest, ingest_snapshots, load_manifest, make_source, read_archive
from .ingest.archive import archive_span
from .ingest.client import ENDPOINT_ENV
from .model import NANOS_PER_DAY, floor_day, make_windows, ns_to_date_str, read_label_file, to_ns
from .report import power_law_record, run_report, write_json
from .structure import core_periphery

logger = logging.getLogger("hbarscope")

DEMO_CONFIG = "hbarscope.toml"


def _abs(value):
    return None if value is None else os.path.abspath(value)


def load_config(args) -> RunConfig:
    """Config file (if any) with command-line overrides applied."""
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "start": getattr(args, "start", None),
        "end": getattr(args, "end", None),
        "archive": _abs(getattr(args, "archive", None)),
        "output_dir": _abs(getattr(args, "outdir", None)),
        "fixtures": _abs(getattr(args, "fixtures", None)),
        "endpoint": getattr(args, "endpoint", None),
        "rate_limit": getattr(args, "rate_limit", None),
        "concurrency": getattr(args, "concurrency", None),
        "record_cap": getattr(args, "record_cap", None),
        "seed": getattr(args, "seed", None),
        "labels": _abs(getattr(args, "labels", None)),
    }
    return config.replace(**overrides)


def _require_range(config: RunConfig) -> tuple[int, int]:
    if not config.start or not config.end:
        raise ConfigurationError("a date range is required: pass --from and --to or set start/end")
    start, end = to_ns(config.start), to_ns(config.end)
    if end <= start:
        raise ConfigurationError(f"empty range: --to {config.end} is not after --from {config.start}")
    return start, end


def _source(config: RunConfig):
    return make_source(config.endpoint or os.environ.get(ENDPOINT_ENV),
                       config.path("fixtures") if config.fixtures else None,
                       rate_limit=config.rate_limit, retry_budget=config.retry_budget,
                       seed=config.seed)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_ingest(config: RunConfig, args) -> int:
    start, end = _require_range(config)
    source = _source(config)

    def progress(window, count):
        print(f"{ns_to_date_str(window.start)}: {count} records archived", file=sys.stderr)

    manifest = ingest(source, start, end, config.path("archive"), cadence=config.cadence,
                      record_cap=config.record_cap, concurrency=config.concurrency,
                      strict_zero_sum=config.strict_zero_sum,
                      progress=None if args.quiet else progress)
    segments = manifest.get("segments", [])
    _emit({"archive": str(config.path("archive")), "segments": len(segments),
           "records": sum(s["record_count"] for s in segments)})
    return 0


def cmd_snapshot(config: RunConfig, args) -> int:
    if args.at:
        stamps = [to_ns(a) for a in args.at]
    else:
        start, end = _require_range(config)
        stamps = [w.end for w in make_windows(start, end, config.cadence)]
    paths = ingest_snapshots(_source(config), stamps, config.path("archive"))
    _emit({"snapshots": [p.name for p in paths]})
    return 0


def cmd_graph(config: RunConfig, args) -> int:
    store = config.path("archive")
    load_manifest(store)
    span = archive_span(store)
    start = to_ns(config.start) if config.start else (floor_day(span[0]) if span else None)
    end = to_ns(config.end) if config.end else (floor_day(span[1]) + NANOS_PER_DAY if span else None)
    windows = make_windows(start, end, config.cadence) if span and end > start else []
    labels = read_label_file(config.path("labels")) if config.labels else None
    txs = read_archive(store, start, end) if windows else []
    graphs = build_graphs(txs, windows, workers=config.workers, labels=labels,
                          exclude_labels=config.excluded_labels)
    outdir = config.path("output_dir") / "graphs"
    outdir.mkdir(parents=True, exist_ok=True)
    records = {}
    for g in graphs:
        day = ns_to_date_str(g.window.start)
        (outdir / f"{day}.edges").write_text(g.to_edge_list())
        rec = {"window_start": day, "n_nodes": g.n_nodes, "n_edges": g.n_edges}
        rec["core_periphery"] = core_periphery(g).to_dict() if g.n_edges else None
        degrees = g.degrees()
        for mode, xmin in (("ks", None), ("xmin1", 1)):
            fit, status = power_law_record(degrees, xmin, config.min_tail) if degrees.size \
                else (None, "EmptyGraph")
            rec[f"power_law_{mode}"] = fit if fit else {"status": status}
        records[day] = rec
    write_json(outdir / "structure.json", records)
    _emit({"graphs": len(graphs), "outdir": str(outdir)})
    return 0


def cmd_report(config: RunConfig, args) -> int:
    summary = run_report(config)
    _emit({"outdir": str(config.path("output_dir")), "files": sorted(summary["files"]),
           "windows": summary["windows"]})
    return 0


def cmd_demo(config: RunConfig, args) -> int:
    from .synth import generate_ledger, write_demo

    outdir = Path(args.outdir) if args.outdir else Path("demo")
    ledger = generate_ledger(n_transactions=config.demo_transactions,
                             n_accounts=config.demo_accounts, weeks=config.demo_weeks,
                             seed=config.seed)
    info = write_demo(ledger, outdir)
    demo_config = RunConfig(
        archive="archive", labels="labels.txt", hbar_prices="prices/hbar_usd.csv",
        btc_prices="prices/btc_usd.csv", output_dir="report", fixtures="fixtures",
        seed=config.seed, demo_transactions=config.demo_transactions,
        demo_accounts=config.demo_accounts, demo_weeks=config.demo_weeks)
    demo_config.save(outdir / DEMO_CONFIG)
    info["config"] = str(outdir / DEMO_CONFIG)
    info["archive"] = str(outdir / "archive")
    _emit(info)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hbarscope", description="Decentralisation metrics for ledger transaction networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--archive", help="archive directory")

    ranged = argparse.ArgumentParser(add_help=False)
    ranged.add_argument("--from", dest="start", help="range start (YYYY-MM-DD or s.nnnnnnnnn)")
    ranged.add_argument("--to", dest="end", help="range end, exclusive")

    remote = argparse.ArgumentParser(add_help=False)
    remote.add_argument("--endpoint", help=f"mirror node base URL (default ${ENDPOINT_ENV} or mainnet)")
    remote.add_argument("--fixtures", help="replay mirror-shaped JSON from this directory")
    remote.add_argument("--rate-limit", type=float, help="requests per second")

    p = sub.add_parser("ingest", parents=[common, ranged, remote],
                       help="fetch transactions into the archive (resumable)")
    p.add_argument("--concurrency", type=int, help="windows fetched in parallel")
    p.add_argument("--record-cap", type=int, help="records per archive segment")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress lines")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("snapshot", parents=[common, ranged, remote],
                       help="fetch balance snapshots at window boundaries")
    p.add_argument("--at", action="append", help="explicit snapshot time; repeatable")
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("graph", parents=[common, ranged], help="export windowed transaction graphs")
    p.add_argument("--labels", help="entity label file")
    p.add_argument("--outdir", help="output directory")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("report", parents=[common, ranged], help="write every report table")
    p.add_argument("--labels", help="entity label file")
    p.add_argument("--outdir", help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo", parents=[common], help="generate a synthetic ledger and fixtures")
    p.add_argument("--outdir", help="where to write (default ./demo)")
    p.add_argument("--seed", type=int, help="random seed (default 42)")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "demo":
            outdir, args.outdir = args.outdir, None  # demo writes its tree, not a report
            config = load_config(args)
            args.outdir = outdir
        else:
            config = load_config(args)
        return args.func(config, args)
    except HbarscopeError as exc:
        print(f"hbarscope {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"hbarscope {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
