"""Near-crash event extraction from vehicle trajectory streams.

Input columns follow the naturalistic-driving schema (Device, Trip, Time in
centiseconds, LatitudeWsu, LongitudeWsu, GpsSpeedWsu, AxWsu, CIPV, Range).
A trip is processed as: trip-duration filter -> per-record lead-vehicle
filters -> threshold detection -> gap deduplication -> severity labelling.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from nearcrash.model import ValidationError

log = logging.getLogger(__name__)

STANDARD_GRAVITY = 9.80665  # m/s^2
MPH = 0.44704  # m/s
FOOT = 0.3048  # m

DETECTION_THRESHOLD_G = -0.45
SEVERITY_THRESHOLD_G = -0.75
MIN_TRIP_DURATION_CS = 60_000  # 10 minutes
MAX_RANGE_M = 50 * FOOT
DEDUP_GAP_S = 180.0

TRIVIAL = "trivial"
NON_TRIVIAL = "non_trivial"

# peak windows as (start_minute, end_minute) of the local day, end exclusive
DEFAULT_PEAK_WINDOWS: tuple[tuple[int, int], ...] = ((7 * 60, 9 * 60), (16 * 60, 18 * 60))

EXCLUDED_TARGET_TYPES = frozenset({"pedestrian", "bicycle"})


class ParseError(ValueError):
    """A trajectory row could not be parsed."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class TrajectoryRecord:
    device: str
    trip: str
    time: int  # centiseconds since trip start
    latitude: float
    longitude: float
    speed: float  # m/s
    accel_long: float  # m/s^2, negative = deceleration
    cipv: int | None = None
    range: float | None = None
    target_type: str | None = None
    trip_start: datetime | None = None

    @property
    def accel_g(self) -> float:
        return accel_to_g(self.accel_long)


@dataclass(frozen=True)
class NearCrashEvent:
    device: str
    trip: str
    event_time: int
    latitude: float
    longitude: float
    peak_decel_g: float
    severity: str | None = None
    speed_mph: float | None = None
    trip_duration_min: float | None = None
    peak_hour: bool | None = None  # None when no wall clock is known

    @property
    def id(self) -> str:
        return f"{self.device}:{self.trip}:{self.event_time}"

    @property
    def location(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


TripKey = tuple[str, str]


@dataclass
class ParseResult:
    trips: dict[TripKey, list[TrajectoryRecord]]
    rows: int = 0
    malformed: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def records(self) -> int:
        return sum(len(v) for v in self.trips.values())


@dataclass
class FilterResult:
    trips: dict[TripKey, list[TrajectoryRecord]]
    # whole-trip (first, last) sample time, measured before per-record filters
    spans: dict[TripKey, tuple[int, int]]
    records_in: int
    excluded: dict[str, int]

    @property
    def records_kept(self) -> int:
        return sum(len(v) for v in self.trips.values())


@dataclass(frozen=True)
class Candidate:
    time: int
    accel_g: float
    record: TrajectoryRecord


# ---------------------------------------------------------------------------
# parsing

_STATE_COLUMNS = ("device", "trip", "time", "latitudewsu", "longitudewsu", "gpsspeedwsu", "axwsu")
_TARGET_COLUMNS = ("device", "trip", "time", "cipv", "range")


def _lower_header(fieldnames: Sequence[str] | None) -> dict[str, str]:
    if not fieldnames:
        raise ParseError("missing header row")
    return {name.strip().lower(): name for name in fieldnames}


class _Semicolon(csv.excel):
    delimiter = ";"


def _sniff_dialect(path: Path) -> type[csv.Dialect]:
    with open(path, newline="") as fh:
        head = fh.readline()
    if "\t" in head:
        return csv.excel_tab
    if ";" in head and "," not in head:
        return _Semicolon
    return csv.excel


def _opt_float(raw: str | None) -> float | None:
    if raw is None or raw.strip() == "" or raw.strip().lower() in {"na", "nan", "null"}:
        return None
    return float(raw)


def _parse_clock(raw: str | None) -> datetime | None:
    if raw is None or not raw.strip():
        return None
    return datetime.fromisoformat(raw.strip())


def _read_rows(path: Path) -> tuple[dict[str, str], Iterable[dict[str, str]], object]:
    fh = open(path, newline="")
    reader = csv.DictReader(fh, dialect=_sniff_dialect(path))
    return _lower_header(reader.fieldnames), reader, fh


def _time_key(raw: str) -> int:
    t = float(raw)
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"invalid Time {raw!r}")
    return int(round(t))


def _load_targets(
    path: Path, strict: bool, result: ParseResult
) -> dict[tuple[str, str, int], tuple[int | None, float | None, str | None]]:
    cols, reader, fh = _read_rows(path)
    missing = [c for c in _TARGET_COLUMNS if c not in cols]
    if missing:
        fh.close()
        raise ParseError(f"{path}: missing columns {missing}")
    ttype = cols.get("targettype")
    targets: dict[tuple[str, str, int], tuple[int | None, float | None, str | None]] = {}
    with fh:
        for rowno, row in enumerate(reader, start=2):
            try:
                key = (row[cols["device"]].strip(), row[cols["trip"]].strip(), _time_key(row[cols["time"]]))
                cipv_raw = _opt_float(row[cols["cipv"]])
                cipv = None if cipv_raw is None else int(cipv_raw)
                rng = _opt_float(row[cols["range"]])
            except (ValueError, TypeError, AttributeError) as exc:
                if strict:
                    raise ParseError(f"{path.name}: {exc}", rowno) from exc
                result.errors.append(f"{path.name} row {rowno}: {exc}")
                continue
            tt = row[ttype].strip().lower() if ttype and row.get(ttype) else None
            prev = targets.get(key)
            # several targets can share a timestamp; the closest-in-path one wins
            if prev is None or (cipv == 1 and prev[0] != 1):
                targets[key] = (cipv, rng, tt)
    return targets


def parse_trajectory(
    source: str | Path,
    targets: str | Path | None = None,
    trip_starts: str | Path | None = None,
    strict: bool = True,
) -> ParseResult:
    """Read trajectory rows and group them per ``(device, trip)``.

    Parameters
    ----------
    source : path
        Delimited text with one header row. Either pre-joined (carrying CIPV
        and Range) or the state stream of a two-file layout.
    targets : path, optional
        Front-target stream keyed by Device/Trip/Time. Its CIPV/Range/TargetType
        values override any in ``source``.
    trip_starts : path, optional
        Sidecar with Device, Trip, TripStart (ISO local datetime). A
        ``TripStart`` column in ``source`` works too.
    strict : bool
        Raise :class:`ParseError` on the first malformed row. When false,
        malformed rows are skipped and counted.
    """
    path = Path(source)
    result = ParseResult(trips={})
    target_map = _load_targets(Path(targets), strict, result) if targets else None
    starts: dict[TripKey, datetime] = {}
    if trip_starts:
        scols, sreader, sfh = _read_rows(Path(trip_starts))
        with sfh:
            for rowno, row in enumerate(sreader, start=2):
                try:
                    starts[(row[scols["device"]].strip(), row[scols["trip"]].strip())] = _parse_clock(
                        row[scols["tripstart"]]
                    )
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"{Path(trip_starts).name}: {exc}", rowno) from exc

    cols, reader, fh = _read_rows(path)
    missing = [c for c in _STATE_COLUMNS if c not in cols]
    if missing:
        fh.close()
        raise ParseError(f"{path}: missing columns {missing}")
    has_target_cols = "cipv" in cols and "range" in cols
    ttype = cols.get("targettype")
    start_col = cols.get("tripstart")

    grouped: dict[TripKey, list[TrajectoryRecord]] = defaultdict(list)
    with fh:
        for rowno, row in enumerate(reader, start=2):
            result.rows += 1
            try:
                device = row[cols["device"]].strip()
                trip = row[cols["trip"]].strip()
                if not device or not trip:
                    raise ValueError("empty Device or Trip")
                time = _time_key(row[cols["time"]])
                lat = float(row[cols["latitudewsu"]])
                lon = float(row[cols["longitudewsu"]])
                speed = float(row[cols["gpsspeedwsu"]])
                ax = float(row[cols["axwsu"]])
                if not all(math.isfinite(v) for v in (lat, lon, speed, ax)):
                    raise ValueError("non-finite numeric field")
                if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                    raise ValueError(f"coordinates out of range ({lat}, {lon})")
                cipv = rng = tt = None
                if target_map is not None:
                    cipv, rng, tt = target_map.get((device, trip, time), (None, None, None))
                elif has_target_cols:
                    c = _opt_float(row[cols["cipv"]])
                    cipv = None if c is None else int(c)
                    rng = _opt_float(row[cols["range"]])
                    tt = row[ttype].strip().lower() if ttype and row.get(ttype) else None
                clock = _parse_clock(row[start_col]) if start_col else None
            except (ValueError, TypeError, AttributeError) as exc:
                result.malformed += 1
                if strict:
                    raise ParseError(f"{path.name}: {exc}", rowno) from exc
                result.errors.append(f"{path.name} row {rowno}: {exc}")
                continue
            if clock is None:
                clock = starts.get((device, trip))
            grouped[(device, trip)].append(
                TrajectoryRecord(device, trip, time, lat, lon, speed, ax, cipv, rng, tt or None, clock)
            )

    for key in sorted(grouped):
        recs = sorted(grouped[key], key=lambda r: r.time)
        deduped: list[TrajectoryRecord] = []
        for r in recs:
            if deduped and deduped[-1].time == r.time:
                result.malformed += 1
                result.errors.append(f"duplicate time {r.time} in trip {key}")
                continue
            deduped.append(r)
        result.trips[key] = deduped
    if result.malformed:
        log.warning("%d malformed trajectory rows skipped", result.malformed)
    return result


# ---------------------------------------------------------------------------
# per-trip operations


def accel_to_g(a: float) -> float:
    if not math.isfinite(a):
        raise ValidationError(f"acceleration must be finite, got {a!r}")
    return a / STANDARD_GRAVITY


def filter_records(trips: Mapping[TripKey, Sequence[TrajectoryRecord]]) -> FilterResult:
    """Apply the exclusion criteria, counting each dropped record once.

    Criteria are checked in order: trip shorter than 10 minutes (whole trip),
    no closest-in-path vehicle, lead vehicle farther than 50 ft, and a lead
    target that is a pedestrian or bicycle.
    """
    excluded = {"short_trip": 0, "no_lead_vehicle": 0, "range_over_50ft": 0, "target_type": 0}
    kept: dict[TripKey, list[TrajectoryRecord]] = {}
    spans: dict[TripKey, tuple[int, int]] = {}
    records_in = 0
    for key in sorted(trips):
        recs = trips[key]
        records_in += len(recs)
        if not recs:
            continue
        first, last = recs[0].time, recs[-1].time
        if last - first < MIN_TRIP_DURATION_CS:
            excluded["short_trip"] += len(recs)
            continue
        spans[key] = (first, last)
        out = []
        for r in recs:
            if r.cipv != 1:
                excluded["no_lead_vehicle"] += 1
            elif r.range is not None and r.range > MAX_RANGE_M:
                excluded["range_over_50ft"] += 1
            elif r.target_type in EXCLUDED_TARGET_TYPES:
                excluded["target_type"] += 1
            else:
                out.append(r)
        kept[key] = out
    return FilterResult(kept, spans, records_in, excluded)


def detect_candidates(trip: Sequence[TrajectoryRecord]) -> list[Candidate]:
    out = []
    for r in trip:
        g = accel_to_g(r.accel_long)
        if g <= DETECTION_THRESHOLD_G:
            out.append(Candidate(r.time, g, r))
    return out


def deduplicate(candidates: Sequence[Candidate], gap: float = DEDUP_GAP_S) -> list[NearCrashEvent]:
    """Greedy single-pass clustering of time-ordered candidates.

    A candidate opens a new cluster when it is more than ``gap`` seconds after
    the previous candidate. Each cluster becomes one event located at its
    strongest deceleration sample (first such sample on ties).
    """
    if gap <= 0:
        raise ValidationError("gap must be positive")
    gap_cs = gap * 100
    clusters: list[list[Candidate]] = []
    prev_time = None
    for c in candidates:
        if prev_time is None or c.time - prev_time > gap_cs:
            clusters.append([c])
        else:
            clusters[-1].append(c)
        prev_time = c.time
    events = []
    for cl in clusters:
        peak = min(cl, key=lambda c: c.accel_g)
        r = peak.record
        events.append(
            NearCrashEvent(
                device=r.device,
                trip=r.trip,
                event_time=peak.time,
                latitude=r.latitude,
                longitude=r.longitude,
                peak_decel_g=peak.accel_g,
            )
        )
    return events


def classify_severity(peak_decel_g: float) -> str:
    if not math.isfinite(peak_decel_g) or peak_decel_g > DETECTION_THRESHOLD_G:
        raise ValidationError(f"{peak_decel_g!r} g is not a near-crash deceleration")
    return NON_TRIVIAL if peak_decel_g <= SEVERITY_THRESHOLD_G else TRIVIAL


def is_peak_hour(
    moment: datetime, windows: Sequence[tuple[int, int]] = DEFAULT_PEAK_WINDOWS
) -> bool:
    if moment.weekday() >= 5:
        return False
    minute = moment.hour * 60 + moment.minute + moment.second / 60
    return any(lo <= minute < hi for lo, hi in windows)


def parse_peak_windows(text: str) -> tuple[tuple[int, int], ...]:
    """Parse ``"07:00-09:00,16:00-18:00"`` into minute-of-day windows."""

    def minutes(hhmm: str) -> int:
        h, _, m = hhmm.strip().partition(":")
        return int(h) * 60 + int(m or 0)

    windows = []
    for part in text.split(","):
        if not part.strip():
            continue
        lo, sep, hi = part.partition("-")
        if not sep:
            raise ValidationError(f"bad peak window {part!r}")
        a, b = minutes(lo), minutes(hi)
        if not 0 <= a < b <= 24 * 60:
            raise ValidationError(f"bad peak window {part!r}")
        windows.append((a, b))
    return tuple(windows)


def trip_features(
    span: tuple[int, int],
    event: NearCrashEvent,
    peak_record: TrajectoryRecord,
    trip_start: datetime | None = None,
    windows: Sequence[tuple[int, int]] = DEFAULT_PEAK_WINDOWS,
) -> tuple[float, float, bool | None]:
    """Speed at the peak sample (mph), whole-trip duration (min) and peak flag.

    ``span`` is the trip's first and last sample time in centiseconds. The
    peak flag is ``None`` without a wall-clock trip start.
    """
    speed_mph = peak_record.speed / MPH
    duration_min = (span[1] - span[0]) / 6000
    peak = None
    if trip_start is not None:
        peak = is_peak_hour(trip_start + timedelta(milliseconds=10 * event.event_time), windows)
    return speed_mph, duration_min, peak


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class ExtractionResult:
    events: list[NearCrashEvent]
    tally: dict[str, int]


def extract_events(
    parsed: ParseResult | Mapping[TripKey, Sequence[TrajectoryRecord]],
    gap: float = DEDUP_GAP_S,
    peak_windows: Sequence[tuple[int, int]] = DEFAULT_PEAK_WINDOWS,
) -> ExtractionResult:
    """Run filter, detection, deduplication, severity and trip features."""
    trips = parsed.trips if isinstance(parsed, ParseResult) else parsed
    filt = filter_records(trips)
    tally = Counter({"records_in": filt.records_in, "records_kept": filt.records_kept})
    for k, v in filt.excluded.items():
        tally[f"excluded_{k}"] = v
    events: list[NearCrashEvent] = []
    n_candidates = 0
    for key in sorted(filt.trips):
        recs = filt.trips[key]
        cands = detect_candidates(recs)
        n_candidates += len(cands)
        by_time = {r.time: r for r in recs}
        for ev in deduplicate(cands, gap):
            peak_rec = by_time[ev.event_time]
            speed, duration, peak = trip_features(
                filt.spans[key], ev, peak_rec, peak_rec.trip_start, peak_windows
            )
            events.append(
                replace(
                    ev,
                    severity=classify_severity(ev.peak_decel_g),
                    speed_mph=speed,
                    trip_duration_min=duration,
                    peak_hour=peak,
                )
            )
    events.sort(key=lambda e: (e.device, e.trip, e.event_time))
    tally["candidates"] = n_candidates
    tally["events"] = len(events)
    tally["merged_candidates"] = n_candidates - len(events)
    tally["events_trivial"] = sum(e.severity == TRIVIAL for e in events)
    tally["events_non_trivial"] = sum(e.severity == NON_TRIVIAL for e in events)
    return ExtractionResult(events, dict(tally))


EVENT_COLUMNS = (
    "device",
    "trip",
    "event_time",
    "latitude",
    "longitude",
    "peak_decel_g",
    "severity",
    "speed_mph",
    "trip_duration_min",
    "peak_hour",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def event_row(e: NearCrashEvent) -> dict[str, str]:
    return {c: _fmt(getattr(e, c)) for c in EVENT_COLUMNS}


def event_from_row(row: Mapping[str, str]) -> NearCrashEvent:
    def f(name):
        v = row.get(name, "")
        return None if v in ("", None) else float(v)

    peak = row.get("peak_hour", "")
    return NearCrashEvent(
        device=row["device"],
        trip=row["trip"],
        event_time=int(row["event_time"]),
        latitude=float(row["latitude"]),
        longitude=float(row["longitude"]),
        peak_decel_g=float(row["peak_decel_g"]),
        severity=row.get("severity") or None,
        speed_mph=f("speed_mph"),
        trip_duration_min=f("trip_duration_min"),
        peak_hour=None if peak in ("", None, "unknown") else peak == "yes",
    )


def write_events(path: str | Path, events: Iterable[NearCrashEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVENT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for e in events:
            w.writerow(event_row(e))


def read_events(path: str | Path) -> list[NearCrashEvent]:
    with open(path, newline="") as fh:
        return [event_from_row(r) for r in csv.DictReader(fh)]
