"""Run configuration and end-to-end orchestration.

Stages: parse -> filter -> detect -> dedup -> classify -> conflate ->
itemize -> mine -> rank -> report. Each stage records how many units came in,
went out and were rejected, and those tallies go into ``run_report.json``
together with the configuration and a SHA-256 digest of every output file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

from nearcrash import __version__
from nearcrash.apriori import generate_class_rules, mine_frequent, rank_rules
from nearcrash.events import (
    DEFAULT_PEAK_WINDOWS,
    EVENT_COLUMNS,
    NearCrashEvent,
    event_from_row,
    event_row,
    extract_events,
    parse_peak_windows,
    parse_trajectory,
    read_events,
    write_events,
)
from nearcrash.itemize import (
    CLASS_FEATURE,
    DEFAULT_SCHEME,
    SEVERITY_LEVELS,
    BinningScheme,
    build_transaction,
    database_from_transactions,
    transaction_from_features,
)
from nearcrash.model import AssociationRule, Item, MiningParams, TransactionDatabase
from nearcrash.reporting import (
    read_rules,
    write_item_frequencies,
    write_rule_summary,
    write_rule_table,
    write_rules,
    write_scatter_data,
    write_variable_frequencies,
)
from nearcrash.spatial import (
    DEFAULT_MAX_DISTANCE_M,
    ConflatedEvent,
    build_index,
    conflate,
    load_exclusions,
    load_segments,
)

log = logging.getLogger(__name__)

ENV_PREFIX = "NEARCRASH_"


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    trajectory: list[str] = field(default_factory=list)  # state stream [, target stream]
    segments: str | None = None
    out_dir: str = "out"
    exclude_segments: str | None = None
    trip_starts: str | None = None
    min_support: float = 0.1
    min_confidence: float = 0.1
    minlen: int = 3
    maxlen: int = 5
    top_k: int = 25
    max_conflation_distance: float | None = DEFAULT_MAX_DISTANCE_M
    peak_windows: str = "07:00-09:00,16:00-18:00"
    drop_unknown: bool = True
    strict_parse: bool = True
    binning: dict[str, dict[str, Any]] = field(default_factory=dict)

    @property
    def params(self) -> MiningParams:
        return MiningParams(self.min_support, self.min_confidence, self.minlen, self.maxlen, CLASS_FEATURE)

    @property
    def scheme(self) -> BinningScheme:
        return DEFAULT_SCHEME.with_overrides(self.binning) if self.binning else DEFAULT_SCHEME

    @property
    def windows(self) -> tuple[tuple[int, int], ...]:
        return parse_peak_windows(self.peak_windows) if self.peak_windows else DEFAULT_PEAK_WINDOWS

    def validate(self, need: Sequence[str] = ("trajectory", "segments")) -> None:
        try:
            self.params
            self.scheme
            self.windows
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.max_conflation_distance is not None and self.max_conflation_distance <= 0:
            raise ConfigError("max_conflation_distance must be positive")
        if "trajectory" in need:
            if not 1 <= len(self.trajectory) <= 2:
                raise ConfigError("trajectory needs one pre-joined file or a state and a target file")
        paths = list(self.trajectory) if "trajectory" in need else []
        if "segments" in need:
            if not self.segments:
                raise ConfigError("segments file is required")
            paths.append(self.segments)
        paths += [p for p in (self.exclude_segments, self.trip_starts) if p]
        for p in paths:
            if not Path(p).is_file():
                raise ConfigError(f"input file not found: {p}")

    def echo(self) -> dict[str, Any]:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    kind = str(_FIELD_TYPES[name])
    if value is None:
        return None
    if name == "trajectory":
        if isinstance(value, str):
            return [v for v in value.split(os.pathsep) if v] if os.pathsep in value else [value]
        return [str(v) for v in value]
    if name == "binning":
        return json.loads(value) if isinstance(value, str) else dict(value)
    if kind.startswith("bool"):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{name}: not a boolean: {value!r}")
        return bool(value)
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            if isinstance(value, str) and value.lower() in ("none", "off", ""):
                return None
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    return str(value)


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Merge defaults, a JSON config file, ``NEARCRASH_*`` env vars and overrides.

    Later sources win. Keys are :class:`RunConfig` field names (dashes are
    accepted for underscores).
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        base = Path(path).parent
        for key, value in doc.items():
            values[key.replace("-", "_")] = value
        # relative paths in a config file are relative to that file
        for key in ("segments", "exclude_segments", "trip_starts", "out_dir"):
            if isinstance(values.get(key), str) and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
        if "trajectory" in values:
            traj = values["trajectory"]
            traj = [traj] if isinstance(traj, str) else traj
            values["trajectory"] = [p if Path(p).is_absolute() else str(base / p) for p in traj]
    env = os.environ if env is None else env
    for key, value in env.items():
        if key.startswith(ENV_PREFIX):
            values[key[len(ENV_PREFIX):].lower()] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key.replace("-", "_")] = value
    unknown = sorted(set(values) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})


# ---------------------------------------------------------------------------
# intermediate files

SEGMENT_COLUMNS = (
    "segment_id",
    "distance_m",
    "f_system",
    "access_con",
    "shoulder_width",
    "lane_width",
    "median_type",
    "median_width",
    "speed_limit",
    "aadt",
)


def _cell(v: Any) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_conflated(path: str | Path, events: Sequence[ConflatedEvent]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=[*EVENT_COLUMNS, *SEGMENT_COLUMNS], lineterminator="\n")
        w.writeheader()
        for ce in events:
            row = event_row(ce.event)
            row["segment_id"] = ce.segment.segment_id
            row["distance_m"] = _cell(ce.distance_m)
            row.update({k: _cell(v) for k, v in ce.segment.attributes().items()})
            w.writerow(row)
    return path


def conflated_features(row: Mapping[str, str], ev: NearCrashEvent) -> dict[str, Any]:
    def num(k):
        return float(row[k]) if row.get(k) else None

    return {
        "speed": ev.speed_mph,
        "functional_class": row.get("f_system") or None,
        "access_con": row.get("access_con") or None,
        "shoulder_width": num("shoulder_width"),
        "lane_width": num("lane_width"),
        "median_type": row.get("median_type") or None,
        "median_width": num("median_width"),
        "speed_limit": num("speed_limit"),
        "peak": None if ev.peak_hour is None else ("yes" if ev.peak_hour else "no"),
        "aadt": num("aadt"),
        "traveltime": ev.trip_duration_min,
    }


def read_conflated_transactions(path: str | Path, scheme: BinningScheme, drop_unknown: bool):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        ev = event_from_row(row)
        out.append(transaction_from_features(ev.id, conflated_features(row, ev), ev.severity, scheme, drop_unknown))
    return out


# ---------------------------------------------------------------------------
# stages

OUTPUT_FILES = (
    "variable_frequencies.csv",
    "item_frequencies.csv",
    "rules_trivial.csv",
    "rules_non_trivial.csv",
    "rule_summary.csv",
    "rule_scatter.csv",
)
REPORT_FILE = "run_report.json"


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunReport:
    config: dict[str, Any]
    stages: dict[str, dict[str, int]] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    version: str = __version__

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def run_extract(cfg: RunConfig, report: RunReport) -> list[NearCrashEvent]:
    state = cfg.trajectory[0]
    targets = cfg.trajectory[1] if len(cfg.trajectory) > 1 else None
    parsed = parse_trajectory(state, targets, cfg.trip_starts, strict=cfg.strict_parse)
    report.stages["parse"] = {
        "rows_in": parsed.rows,
        "records": parsed.records,
        "malformed": parsed.malformed,
    }
    ex = extract_events(parsed, peak_windows=cfg.windows)
    t = ex.tally
    report.stages["filter"] = {
        "records_in": t["records_in"],
        "records_kept": t["records_kept"],
        **{k: v for k, v in t.items() if k.startswith("excluded_")},
    }
    report.stages["detect"] = {
        "records_in": t["records_kept"],
        "candidates": t["candidates"],
        "below_threshold": t["records_kept"] - t["candidates"],
    }
    report.stages["dedup"] = {
        "candidates_in": t["candidates"],
        "events": t["events"],
        "merged": t["merged_candidates"],
    }
    report.stages["classify"] = {
        "events_in": t["events"],
        "trivial": t["events_trivial"],
        "non_trivial": t["events_non_trivial"],
    }
    return ex.events


def run_conflate(cfg: RunConfig, events: Sequence[NearCrashEvent], report: RunReport) -> list[ConflatedEvent]:
    loaded = load_segments(cfg.segments)
    excluded = load_exclusions(cfg.exclude_segments)
    report.stages["segments"] = {
        "features_in": len(loaded.segments) + loaded.skipped,
        "segments": len(loaded.segments),
        "skipped_geometry": loaded.skipped,
        "excluded": sum(s.segment_id in excluded for s in loaded.segments),
    }
    if not events:
        report.stages["conflate"] = {"events_in": 0, "conflated": 0, "rejected_distance": 0}
        return []
    index = build_index(loaded.segments)
    res = conflate(events, index, excluded, cfg.max_conflation_distance)
    report.stages["conflate"] = {
        "events_in": len(events),
        "conflated": len(res.events),
        "rejected_distance": res.rejected,
    }
    return res.events


def mine_and_report(
    cfg: RunConfig,
    db: TransactionDatabase | None,
    freq_rows,
    report: RunReport,
    out_dir: Path,
) -> list[AssociationRule]:
    rules: list[AssociationRule] = []
    if db is not None:
        table = mine_frequent(db, cfg.min_support, cfg.maxlen)
        rules = generate_class_rules(table, db, cfg.params)
        report.stages["mine"] = {
            "transactions": db.n,
            "frequent_itemsets": len(table),
            "rules": len(rules),
            **{
                f"rules_{k}": sum(r.consequent.level == v for r in rules)
                for k, v in SEVERITY_LEVELS.items()
            },
        }
    else:
        report.stages["mine"] = {"transactions": 0, "frequent_itemsets": 0, "rules": 0}
    write_variable_frequencies(out_dir / "variable_frequencies.csv", freq_rows or [])
    write_item_frequencies(out_dir / "item_frequencies.csv", db)
    write_report_files(cfg, rules, out_dir)
    return rules


def write_report_files(cfg: RunConfig, rules: Sequence[AssociationRule], out_dir: Path) -> None:
    for key, level in SEVERITY_LEVELS.items():
        item = Item(CLASS_FEATURE, level)
        ranked = rank_rules(rules, "lift", cfg.top_k, consequent=item)
        write_rule_table(out_dir / f"rules_{key}.csv", ranked, item, cfg.maxlen)
    write_rule_summary(out_dir / "rule_summary.csv", rules)
    write_scatter_data(out_dir / "rule_scatter.csv", rules)


def prepare_database(cfg: RunConfig, report: RunReport | None = None):
    """Extract, conflate and itemize; returns ``(db, freq_rows, report)``.

    ``db`` and ``freq_rows`` are ``None`` when no event survives conflation.
    """
    report = report or RunReport(config=cfg.echo())
    events = run_extract(cfg, report)
    if not events:
        report.warnings.append("no near-crash events extracted; writing empty reports")
    conflated = run_conflate(cfg, events, report)
    if not conflated:
        if events:
            report.warnings.append("every event was rejected during conflation; writing empty reports")
        report.stages["itemize"] = {"events_in": 0, "transactions": 0, "distinct_items": 0}
        return None, None, report
    db, freq_rows = database_from_transactions(
        (build_transaction(ce, cfg.scheme, cfg.drop_unknown) for ce in conflated), cfg.scheme
    )
    report.stages["itemize"] = {
        "events_in": len(conflated),
        "transactions": db.n,
        "distinct_items": len(db.item_universe),
    }
    return db, freq_rows, report


def run_pipeline(cfg: RunConfig) -> RunReport:
    """Run every stage and write the report artifacts into ``cfg.out_dir``.

    Raises
    ------
    ConfigError
        Before any processing if the configuration or an input path is bad.
    """
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    db, freq_rows, report = prepare_database(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    mine_and_report(cfg, db, freq_rows, report, out_dir)
    report.outputs = {name: _digest(out_dir / name) for name in OUTPUT_FILES}
    for w in report.warnings:
        log.warning(w)
    report.write(out_dir / REPORT_FILE)
    return report


# ---------------------------------------------------------------------------
# single-stage entry points used by the CLI


def stage_extract(cfg: RunConfig, out: Path) -> RunReport:
    report = RunReport(config=cfg.echo())
    events = run_extract(cfg, report)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_events(out, events)
    return report


def stage_conflate(cfg: RunConfig, events_path: Path, out: Path) -> RunReport:
    report = RunReport(config=cfg.echo())
    events = read_events(events_path)
    conflated = run_conflate(cfg, events, report)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_conflated(out, conflated)
    return report


def stage_mine(cfg: RunConfig, conflated_path: Path, out_dir: Path) -> RunReport:
    report = RunReport(config=cfg.echo())
    txs = read_conflated_transactions(conflated_path, cfg.scheme, cfg.drop_unknown)
    out_dir.mkdir(parents=True, exist_ok=True)
    db = freq_rows = None
    rules: list[AssociationRule] = []
    if txs:
        db, freq_rows = database_from_transactions(txs, cfg.scheme)
        table = mine_frequent(db, cfg.min_support, cfg.maxlen)
        rules = generate_class_rules(table, db, cfg.params)
        report.stages["mine"] = {"transactions": db.n, "frequent_itemsets": len(table), "rules": len(rules)}
    else:
        report.warnings.append("no transactions to mine")
    write_variable_frequencies(out_dir / "variable_frequencies.csv", freq_rows or [])
    write_item_frequencies(out_dir / "item_frequencies.csv", db)
    write_rules(out_dir / "rules.csv", rules)
    return report


def stage_report(cfg: RunConfig, rules_path: Path, out_dir: Path) -> RunReport:
    report = RunReport(config=cfg.echo())
    rules = read_rules(rules_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_files(cfg, rules, out_dir)
    return report
