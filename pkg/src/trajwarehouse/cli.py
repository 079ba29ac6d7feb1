"""Command-line front end.

Exit codes: 0 success, 1 validation/parse failure, 2 query error, 3 internal fault.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import etl
from .query import QueryError, QuerySpec, canned_query, execute
from .warehouse import (
    SchemaMismatch,
    Warehouse,
    dump_schema_descriptor,
    schema_descriptor,
)

EXIT_OK, EXIT_INVALID, EXIT_QUERY, EXIT_INTERNAL = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_ingest(args) -> int:
    config = etl.load_config(args.config)
    staged = etl.extract(config)
    for name, n in staged.counts().items():
        print(f"{name}\t{n}")
    return EXIT_OK


def cmd_run_etl(args) -> int:
    config = etl.load_config(args.config)
    report = etl.run_pipeline(config, args.out)
    sys.stdout.write(report.to_json())
    return EXIT_OK


def _open_warehouse(directory) -> Warehouse:
    if not Warehouse.exists(directory):
        raise FileNotFoundError(f"no warehouse tables in {directory}")
    wh = Warehouse.load(directory)
    report = wh.integrity_check()
    if not report.ok:
        raise SchemaMismatch("warehouse fails integrity check: " + "; ".join(report.entries))
    return wh


def cmd_query(args) -> int:
    wh = _open_warehouse(args.warehouse)
    if args.canned:
        params = {
            "season": args.season,
            "polygon": args.polygon_wkt,
            "speed_kmh": args.speed_kmh,
            "year_from": getattr(args, "from"),
            "year_to": args.to,
            "start_poi": args.start_poi,
            "end_poi": args.end_poi,
        }
        result = canned_query(wh, args.canned, params)
    else:
        result = execute(wh, QuerySpec.from_json(Path(args.spec).read_text(encoding="utf-8")))
    sys.stdout.write(result.to_text() if args.format == "text" else result.to_csv())
    return EXIT_OK


def cmd_export_schema(args) -> int:
    if args.warehouse is not None:
        _open_warehouse(args.warehouse)
    sys.stdout.write(dump_schema_descriptor(schema_descriptor()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajwh", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and validate the inputs named by a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run-etl", help="extract, transform and load into a warehouse dir")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="warehouse directory (created or updated)")
    p.set_defaults(func=cmd_run_etl)

    p = sub.add_parser("query", help="run a JSON query spec or a canned query")
    p.add_argument("--warehouse", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="path to a JSON QuerySpec")
    src.add_argument("--canned", choices=["Q1", "Q2", "Q3", "Q4"])
    p.add_argument("--season")
    p.add_argument("--polygon-wkt")
    p.add_argument("--speed-kmh", type=float)
    p.add_argument("--from", type=int)
    p.add_argument("--to", type=int)
    p.add_argument("--start-poi")
    p.add_argument("--end-poi")
    p.add_argument("--format", choices=["csv", "text"], default="csv")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("export-schema", help="print the schema descriptor as JSON")
    p.add_argument("--warehouse")
    p.set_defaults(func=cmd_export_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except etl.ParseError as exc:
        for e in exc.all_errors:
            _err(str(e))
        return EXIT_INVALID
    except (FileNotFoundError, etl.ConfigError, SchemaMismatch) as exc:
        _err(str(exc))
        return EXIT_INVALID
    except QueryError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_QUERY
    except Exception as exc:  # noqa: BLE001
        _err(f"internal fault: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
