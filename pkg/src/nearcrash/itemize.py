"""Binning of event and road attributes into categorical items.

Default levels reproduce the category labels of the near-crash summary table
verbatim (including its en dashes and mixed wording). Numeric bins are
half-open ``[lo, hi)``; the top bin runs to infinity.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from nearcrash.events import NON_TRIVIAL, TRIVIAL
from nearcrash.model import (
    Item,
    Itemset,
    Transaction,
    TransactionDatabase,
    ValidationError,
    canonical_item,
)
from nearcrash.spatial import UNKNOWN, ConflatedEvent

CLASS_FEATURE = "nv_severity"
SEVERITY_LEVELS = {TRIVIAL: "trivial", NON_TRIVIAL: "non-trivial"}

FEATURES = (
    "speed",
    "functional_class",
    "access_con",
    "shoulder_width",
    "lane_width",
    "median_type",
    "median_width",
    "speed_limit",
    "peak",
    "aadt",
    "traveltime",
)


@dataclass(frozen=True)
class FeatureBins:
    """How one feature maps onto levels.

    ``kind`` is ``"interval"`` (``breakpoints`` split ``labels``, with an
    optional ``zero_label`` for values <= 0), ``"nearest"`` (snap to the
    closest of ``centers`` within ``max_offset``) or ``"categorical"``
    (labels pass through, optionally restricted to ``labels``).
    """

    kind: str
    labels: tuple[str, ...] = ()
    breakpoints: tuple[float, ...] = ()
    zero_label: str | None = None
    centers: tuple[float, ...] = ()
    max_offset: float = 0.5
    skip_levels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "interval":
            if len(self.labels) != len(self.breakpoints) + 1:
                raise ValidationError("interval bins need len(labels) == len(breakpoints) + 1")
            if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
                raise ValidationError("breakpoints must be strictly increasing")
            if self.zero_label is not None and self.breakpoints and self.breakpoints[0] <= 0:
                raise ValidationError("zero_label requires a positive first breakpoint")
        elif self.kind == "nearest":
            if not self.centers or len(self.labels) != len(self.centers):
                raise ValidationError("nearest bins need one label per center")
            if any(b >= c for b, c in zip(self.centers, self.centers[1:])):
                raise ValidationError("centers must be strictly increasing")
        elif self.kind != "categorical":
            raise ValidationError(f"unknown bin kind {self.kind!r}")

    def level(self, value: Any) -> str | None:
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", UNKNOWN)):
            return UNKNOWN
        if self.kind == "categorical":
            label = str(value).strip()
            if label in self.skip_levels:
                return None
            if self.labels and label not in self.labels:
                raise ValidationError(f"level {label!r} not in {self.labels}")
            return label
        x = float(value)
        if not math.isfinite(x):
            return UNKNOWN
        if self.kind == "interval":
            if self.zero_label is not None and x <= 0:
                return self.zero_label
            return self.labels[bisect.bisect_right(self.breakpoints, x)]
        # nearest center; a tie between two centers goes to the middle of the list
        if x < self.centers[0] - self.max_offset or x > self.centers[-1] + self.max_offset:
            return UNKNOWN
        mid = (len(self.centers) - 1) / 2
        best = min(
            range(len(self.centers)),
            key=lambda k: (abs(x - self.centers[k]), abs(k - mid)),
        )
        return self.labels[best]


def _default_bins() -> dict[str, FeatureBins]:
    mph3 = ("less than 30 mph", "30 - 60 mph", "larger than 60 mph")
    return {
        "speed": FeatureBins("interval", mph3, (30.0, 60.0)),
        "functional_class": FeatureBins("categorical"),
        "access_con": FeatureBins("categorical", ("yes", "no")),
        "shoulder_width": FeatureBins(
            "interval", ("less than 4 ft", "4 - 8 ft", "larger than 8 ft"), (4.0, 8.0),
            zero_label="no shoulder",
        ),
        "lane_width": FeatureBins(
            "nearest", ("11 ft", "12 ft", "13 ft"), centers=(11.0, 12.0, 13.0), max_offset=0.5
        ),
        "median_type": FeatureBins(
            "categorical", ("barrier", "curbed", "unprotected", "none"), skip_levels=("none",)
        ),
        "median_width": FeatureBins(
            "interval", ("less than 35 ft", "35 - 60 ft", "larger than 60 ft"), (35.0, 60.0),
            zero_label="no median",
        ),
        "speed_limit": FeatureBins("interval", mph3, (30.0, 60.0)),
        "peak": FeatureBins("categorical", ("yes", "no")),
        "aadt": FeatureBins(
            "interval",
            (
                "less than 20,000 vehicles per day (vpd)",
                "20,000 – 40,000 vpd",
                "40,000 – 70,000 vpd",
                "more than 70,000 vpd",
            ),
            (20_000.0, 40_000.0, 70_000.0),
        ),
        "traveltime": FeatureBins(
            "interval",
            ("less than 20 minutes", "20 to 60 minutes", "1 - 2 hours", "longer than 2 hours"),
            (20.0, 60.0, 120.0),
        ),
    }


@dataclass(frozen=True)
class BinningScheme:
    bins: Mapping[str, FeatureBins] = field(default_factory=_default_bins)

    def with_overrides(self, overrides: Mapping[str, Mapping[str, Any]]) -> "BinningScheme":
        """Return a copy with some features re-binned.

        ``overrides`` maps a feature name to keyword arguments of
        :class:`FeatureBins`, e.g. ``{"aadt": {"kind": "interval",
        "breakpoints": [10000], "labels": ["low", "high"]}}``.
        """
        bins = dict(self.bins)
        for name, spec in overrides.items():
            spec = dict(spec)
            for key in ("labels", "breakpoints", "centers", "skip_levels"):
                if key in spec:
                    spec[key] = tuple(spec[key])
            bins[name.lower()] = FeatureBins(**spec)
        return BinningScheme(bins)


DEFAULT_SCHEME = BinningScheme()


def bin_value(scheme: BinningScheme, feature: str, value: Any) -> Item | None:
    """Map a raw value to its item; ``None`` when the level carries no item."""
    bins = scheme.bins.get(feature.lower())
    if bins is None:
        raise ValidationError(f"feature {feature!r} is not in the binning scheme")
    level = bins.level(value)
    return None if level is None else canonical_item(feature, level)


def event_features(ce: ConflatedEvent) -> dict[str, Any]:
    e, s = ce.event, ce.segment
    return {
        "speed": e.speed_mph,
        "functional_class": s.f_system,
        "access_con": s.access_con,
        "shoulder_width": s.shoulder_width,
        "lane_width": s.lane_width,
        "median_type": s.median_type,
        "median_width": s.median_width,
        "speed_limit": s.speed_limit,
        "peak": None if e.peak_hour is None else ("yes" if e.peak_hour else "no"),
        "aadt": s.aadt,
        "traveltime": e.trip_duration_min,
    }


def transaction_from_features(
    tid: str,
    features: Mapping[str, Any],
    severity: str | None,
    scheme: BinningScheme = DEFAULT_SCHEME,
    drop_unknown: bool = True,
) -> Transaction:
    if severity not in SEVERITY_LEVELS:
        raise ValidationError(f"event {tid} has no severity label")
    items = []
    for name in FEATURES:
        item = bin_value(scheme, name, features.get(name))
        if item is None or (drop_unknown and item.level == UNKNOWN):
            continue
        items.append(item)
    items.append(Item(CLASS_FEATURE, SEVERITY_LEVELS[severity]))
    return Transaction(tid, Itemset(tuple(items)), CLASS_FEATURE)


def build_transaction(
    ce: ConflatedEvent, scheme: BinningScheme = DEFAULT_SCHEME, drop_unknown: bool = True
) -> Transaction:
    """Encode one conflated event as a transaction with a single class item."""
    return transaction_from_features(
        ce.event.id, event_features(ce), ce.event.severity, scheme, drop_unknown
    )


@dataclass(frozen=True)
class FrequencyRow:
    variable: str
    level: str
    count: int
    share: float  # count / N


def frequency_table(db: TransactionDatabase, scheme: BinningScheme | None = None) -> list[FrequencyRow]:
    """Per-item counts and shares, ordered by variable then level.

    Variables follow the scheme's feature order, the class feature last; levels
    follow the scheme's label order where it has one.
    """
    counts = Counter(i for t in db.transactions for i in t.items)
    scheme = scheme or DEFAULT_SCHEME
    order = list(scheme.bins) + [CLASS_FEATURE]

    def key(item: Item):
        var_rank = order.index(item.feature) if item.feature in order else len(order)
        bins = scheme.bins.get(item.feature)
        labels = list(bins.labels) if bins else []
        if bins is not None and bins.zero_label:
            labels = [bins.zero_label] + labels
        lvl_rank = labels.index(item.level) if item.level in labels else len(labels)
        return (var_rank, item.feature, lvl_rank, item.level)

    n = db.n
    return [FrequencyRow(i.feature, i.level, counts[i], counts[i] / n) for i in sorted(counts, key=key)]


def database_from_transactions(
    transactions: Iterable[Transaction], scheme: BinningScheme = DEFAULT_SCHEME
) -> tuple[TransactionDatabase, list[FrequencyRow]]:
    txs = sorted(transactions, key=lambda t: t.id)
    if not txs:
        raise ValidationError("cannot build a transaction database from zero events")
    dup = [i for i, c in Counter(t.id for t in txs).items() if c > 1]
    if dup:
        raise ValidationError(f"duplicate event ids: {sorted(dup)[:5]}")
    db = TransactionDatabase(tuple(txs))
    return db, frequency_table(db, scheme)


def build_database(
    events: Iterable[ConflatedEvent],
    scheme: BinningScheme = DEFAULT_SCHEME,
    drop_unknown: bool = True,
) -> tuple[TransactionDatabase, list[FrequencyRow]]:
    """Transaction database plus its per-item frequency table.

    Transactions are ordered by event id, so the result does not depend on
    the order of ``events``.
    """
    return database_from_transactions(
        (build_transaction(e, scheme, drop_unknown) for e in events), scheme
    )


def item_frequencies(
    db: TransactionDatabase, scope: str = "all", top_n: int | None = 20
) -> list[tuple[Item, int, float]]:
    """Most frequent items within ``scope`` ("all", "trivial", "non_trivial").

    For a class scope the base is the transactions of that class and the class
    item itself is left out. Sorted by relative frequency, ties by item name.
    """
    if scope == "all":
        txs = db.transactions
        cls_item = None
    elif scope in SEVERITY_LEVELS:
        cls_item = Item(CLASS_FEATURE, SEVERITY_LEVELS[scope])
        txs = tuple(t for t in db.transactions if cls_item in t.items)
    else:
        raise ValidationError(f"unknown scope {scope!r}")
    counts = Counter(i for t in txs for i in t.items if i != cls_item)
    base = len(txs)
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))
    if top_n is not None:
        rows = rows[:top_n]
    return [(item, c, c / base) for item, c in rows]
