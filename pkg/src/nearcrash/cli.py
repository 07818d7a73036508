"""Command-line entry point: ``nearcrash {extract,conflate,mine,report,run}``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from nearcrash.events import ParseError
from nearcrash.model import ValidationError
from nearcrash.pipeline import (
    ConfigError,
    RunReport,
    load_config,
    run_pipeline,
    stage_conflate,
    stage_extract,
    stage_mine,
    stage_report,
)
from nearcrash.spatial import GeometryError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("nearcrash")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig defaults")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("-v", "--verbose", action="store_true")


def _extract_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--trajectory", nargs="+", metavar="PATH",
        help="pre-joined trajectory file, or state file followed by front-target file",
    )
    p.add_argument("--trip-starts", dest="trip_starts", help="sidecar with Device,Trip,TripStart")
    p.add_argument("--peak-windows", dest="peak_windows", help='e.g. "07:00-09:00,16:00-18:00"')
    p.add_argument("--lenient", dest="strict_parse", action="store_const", const=False,
                   help="skip and count malformed rows instead of failing")


def _conflate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--segments", help="GeoJSON FeatureCollection of road segments")
    p.add_argument("--exclude-segments", dest="exclude_segments", help="segment ids to ignore, one per line")
    p.add_argument("--max-conflation-distance", dest="max_conflation_distance", type=float,
                   help="reject events farther than this many metres from any segment")


def _mine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-support", dest="min_support", type=float)
    p.add_argument("--min-confidence", dest="min_confidence", type=float)
    p.add_argument("--minlen", type=int)
    p.add_argument("--maxlen", type=int)
    p.add_argument("--drop-unknown", dest="drop_unknown", action=argparse.BooleanOptionalAction, default=None)


def _report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--top-k", dest="top_k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearcrash", description="Mine class association rules from hard-braking events."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="trajectory -> events.csv")
    _common(p)
    _extract_flags(p)

    p = sub.add_parser("conflate", help="events.csv + segments -> conflated.csv")
    _common(p)
    _conflate_flags(p)
    p.add_argument("--events", required=True)

    p = sub.add_parser("mine", help="conflated.csv -> rules.csv and frequency tables")
    _common(p)
    _mine_flags(p)
    p.add_argument("--conflated", required=True)

    p = sub.add_parser("report", help="rules.csv -> rule tables, summary, scatter data")
    _common(p)
    _report_flags(p)
    p.add_argument("--maxlen", type=int)
    p.add_argument("--rules", required=True)

    p = sub.add_parser("run", help="full pipeline")
    _common(p)
    _extract_flags(p)
    _conflate_flags(p)
    _mine_flags(p)
    _report_flags(p)
    return parser


_NON_CONFIG = {"command", "config", "verbose", "events", "conflated", "rules"}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG and v is not None}
    try:
        cfg = load_config(args.config, overrides)
        out_dir = Path(cfg.out_dir)
        if args.command == "run":
            report = run_pipeline(cfg)
        elif args.command == "extract":
            cfg.validate(need=("trajectory",))
            report = stage_extract(cfg, out_dir / "events.csv")
        elif args.command == "conflate":
            cfg.validate(need=("segments",))
            _require(args.events)
            report = stage_conflate(cfg, Path(args.events), out_dir / "conflated.csv")
        elif args.command == "mine":
            cfg.validate(need=())
            _require(args.conflated)
            report = stage_mine(cfg, Path(args.conflated), out_dir)
        else:
            cfg.validate(need=())
            _require(args.rules)
            report = stage_report(cfg, Path(args.rules), out_dir)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (ParseError, ValidationError, GeometryError, LookupError, ValueError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    _print_summary(report)
    return EXIT_OK


def _require(path: str) -> None:
    if not Path(path).is_file():
        raise ConfigError(f"input file not found: {path}")


def _print_summary(report: RunReport) -> None:
    for stage, tally in report.stages.items():
        cells = " ".join(f"{k}={v}" for k, v in tally.items())
        print(f"{stage:10s} {cells}")
    for w in report.warnings:
        print(f"warning: {w}")


if __name__ == "__main__":
    sys.exit(main())
