"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> <name>: PASS|FAIL`` line (with its
runtime against the budget) straight to the terminal, then asserts.
"""

import csv
import random
import time
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearcrash.apriori import count_support, generate_class_rules, mine_frequent, mine_rules
from nearcrash.events import STANDARD_GRAVITY, extract_events, parse_trajectory
from nearcrash.itemize import (
    CLASS_FEATURE,
    DEFAULT_SCHEME,
    FEATURES,
    bin_value,
    database_from_transactions,
    transaction_from_features,
)
from nearcrash.model import Itemset, MiningParams, TransactionDatabase, compute_metrics, parse_item, round_half_away
from nearcrash.pipeline import OUTPUT_FILES, REPORT_FILE, load_config, run_pipeline
from nearcrash.spatial import RoadSegment, SegmentIndex, nearest_segment_scan, point_segment_distance

from oracles import brute_frequent, brute_rules


@pytest.fixture
def verdict(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(n, name, ok, elapsed, budget):
        line = f"ACCEPTANCE {n} {name}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s, budget {budget}s)"
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        assert ok, line

    return emit


# -- 1: arithmetic of the 50 reference rules ----------------------------------
# (CT, S, C, L) per rule; consequent base counts 556 trivial / 401 non-trivial of 957.
N_REF = 957
TRIVIAL_RULES = [
    (120, 0.125, 0.811, 1.396), (100, 0.104, 0.787, 1.355), (108, 0.113, 0.771, 1.328),
    (146, 0.153, 0.768, 1.323), (128, 0.134, 0.757, 1.304), (127, 0.133, 0.756, 1.301),
    (169, 0.177, 0.748, 1.287), (143, 0.149, 0.745, 1.282), (110, 0.115, 0.733, 1.262),
    (100, 0.104, 0.73, 1.256), (108, 0.113, 0.73, 1.256), (119, 0.124, 0.726, 1.249),
    (140, 0.146, 0.725, 1.249), (121, 0.126, 0.725, 1.247), (97, 0.101, 0.724, 1.246),
    (103, 0.108, 0.811, 1.396), (109, 0.114, 0.784, 1.35), (97, 0.101, 0.764, 1.315),
    (112, 0.117, 0.747, 1.285), (110, 0.115, 0.743, 1.279), (124, 0.13, 0.734, 1.263),
    (104, 0.109, 0.732, 1.261), (98, 0.102, 0.726, 1.249), (111, 0.116, 0.725, 1.249),
    (107, 0.112, 0.728, 1.253),
]
NON_TRIVIAL_RULES = [
    (149, 0.156, 0.674, 1.609), (151, 0.158, 0.674, 1.609), (150, 0.157, 0.667, 1.591),
    (195, 0.204, 0.637, 1.521), (195, 0.204, 0.635, 1.516), (196, 0.205, 0.634, 1.514),
    (197, 0.206, 0.633, 1.512), (198, 0.207, 0.631, 1.505), (149, 0.156, 0.677, 1.616),
    (149, 0.156, 0.671, 1.602), (116, 0.121, 0.671, 1.6), (115, 0.12, 0.669, 1.596),
    (116, 0.121, 0.659, 1.573), (195, 0.204, 0.639, 1.526), (154, 0.161, 0.639, 1.525),
    (154, 0.161, 0.636, 1.519), (199, 0.208, 0.634, 1.512), (155, 0.162, 0.633, 1.51),
    (198, 0.207, 0.633, 1.51), (197, 0.206, 0.631, 1.507), (155, 0.162, 0.63, 1.504),
    (115, 0.12, 0.673, 1.605), (115, 0.12, 0.665, 1.586), (157, 0.164, 0.633, 1.511),
    (157, 0.164, 0.631, 1.505),
]


def test_acceptance_1_reference_rule_arithmetic(verdict):
    t0 = time.perf_counter()
    bad = []
    rows = [(r, 556) for r in TRIVIAL_RULES] + [(r, 401) for r in NON_TRIVIAL_RULES]
    for (ct, s_ref, c_ref, l_ref), base in rows:
        count_a = round(ct / c_ref)
        s, c, lift = compute_metrics(count_a, ct, base, N_REF)
        if abs(s - s_ref) > 0.001 or abs(lift - l_ref) > 0.005 or abs(c - c_ref) > 0.001:
            bad.append((ct, s_ref, c_ref, l_ref, s, c, lift))
    # the two worked examples
    s, _, lift = compute_metrics(round(120 / 0.811), 120, 556, N_REF)
    worked = abs(s - 0.125) <= 0.001 and abs(0.811 * 957 / 556 - 1.396) <= 0.005
    worked &= abs(149 / N_REF - 0.156) <= 0.001 and abs(0.677 * 957 / 401 - 1.616) <= 0.005
    elapsed = time.perf_counter() - t0
    verdict(1, "reference rule arithmetic", len(rows) == 50 and not bad and worked and elapsed < 1, elapsed, 1)


# -- 2: apriori against brute force --------------------------------------------


def random_db(rnd):
    n_tx = rnd.randint(1, 64)
    n_feat = rnd.randint(1, 4)
    levels = {f"f{k}": [str(v) for v in range(rnd.randint(1, 3))] for k in range(n_feat)}
    # at most 10 distinct items including the two class levels
    while sum(len(v) for v in levels.values()) > 8:
        levels.popitem()
    rows = []
    for _ in range(n_tx):
        row = [f"{f}={rnd.choice(lv)}" for f, lv in levels.items() if rnd.random() < 0.8]
        row.append(f"{CLASS_FEATURE}={rnd.choice(['trivial', 'non-trivial'])}")
        rows.append(row)
    return TransactionDatabase.from_itemsets(rows, class_feature=CLASS_FEATURE)


def test_acceptance_2_apriori_oracle(verdict):
    t0 = time.perf_counter()
    rnd = random.Random(20240601)
    failures = 0
    for _ in range(220):
        db = random_db(rnd)
        assert len(db.item_universe) <= 10
        minlen = rnd.randint(2, 3)
        params = MiningParams(rnd.uniform(0.05, 0.6), rnd.uniform(0.0, 0.9) or 0.01, minlen,
                              rnd.randint(minlen, 5), CLASS_FEATURE)
        table = mine_frequent(db, params.min_support, params.maxlen)
        if table.as_dict() != brute_frequent(db, params.min_support, params.maxlen):
            failures += 1
            continue
        expected = brute_rules(db, params)
        got = {(r.antecedent, r.consequent): r for r in generate_class_rules(table, db, params)}
        if got.keys() != expected.keys():
            failures += 1
            continue
        for key, r in got.items():
            count, s, c, lift = expected[key]
            if r.count != count or max(abs(r.support - s), abs(r.confidence - c), abs(r.lift - lift)) > 1e-12:
                failures += 1
                break
    elapsed = time.perf_counter() - t0
    verdict(2, "apriori oracle equivalence (220 databases)", failures == 0 and elapsed < 30, elapsed, 30)


# -- 3: event extraction fixture -----------------------------------------------

EPISODES = {  # second -> peak deceleration in g
    60: -0.45,    # trivial, exactly at the detection threshold
    300: -0.75,   # non-trivial, exactly at the severity threshold
    520: -0.60,   # trivial, absorbs the next brake
    610: -0.55,   # 90 s later: merged into the 520 s event
    800: -0.95,   # non-trivial
    1000: -0.40,  # below threshold, not an event
    1200: -0.50,  # trivial
}
EXPECTED = [(6000, -0.45, "trivial"), (30000, -0.75, "non_trivial"), (52000, -0.60, "trivial"),
            (80000, -0.95, "non_trivial"), (120000, -0.50, "trivial")]


def test_acceptance_3_event_fixture(tmp_path, verdict):
    path = tmp_path / "trip.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Device", "Trip", "Time", "LatitudeWsu", "LongitudeWsu", "GpsSpeedWsu", "AxWsu", "CIPV", "Range"])
        for sec in range(1501):
            ax = EPISODES.get(sec, 0.0) * STANDARD_GRAVITY
            w.writerow(["10101", "1", sec * 100, 42.25, -83.8 + sec * 1e-5, 15.0, repr(ax), 1, 10.0])
    t0 = time.perf_counter()
    res = extract_events(parse_trajectory(path))
    elapsed = time.perf_counter() - t0
    got = [(e.event_time, e.peak_decel_g, e.severity) for e in res.events]
    ok = got == EXPECTED and res.tally["merged_candidates"] == 1 and res.tally["candidates"] == 6
    verdict(3, "event extraction fixture (5 of 7 episodes)", ok and elapsed < 1, elapsed, 1)


# -- 4: spatial index against exhaustive scan -----------------------------------


def test_acceptance_4_spatial_oracle(verdict):
    rnd = random.Random(7)
    segs = []
    for i in range(1000):
        lat, lon = 42.0 + rnd.random() * 0.5, -84.0 + rnd.random() * 0.5
        pts = [(lat, lon)]
        for _ in range(rnd.randint(1, 4)):
            lat, lon = lat + rnd.uniform(-0.005, 0.005), lon + rnd.uniform(-0.005, 0.005)
            pts.append((lat, lon))
        segs.append(RoadSegment(str(1000 + i), tuple(pts)))
    # an exact tie well away from the random network
    segs += [RoadSegment("5", ((40.001, -86.001), (40.001, -85.999))),
             RoadSegment("4", ((39.999, -86.001), (39.999, -85.999)))]
    t0 = time.perf_counter()
    index = SegmentIndex(segs)
    points = [(42.0 + rnd.random() * 0.5, -84.0 + rnd.random() * 0.5) for _ in range(1000)]
    mismatches = 0
    for p in points:
        a, da = index.nearest(p)
        b, db = nearest_segment_scan(segs, p)
        mismatches += (a.segment_id, da) != (b.segment_id, db)
    tie = index.nearest((40.0, -86.0))[0].segment_id == "4"
    equator = abs(point_segment_distance((0.0001, 0.0005), [(0.0, 0.0), (0.0, 0.001)]) - 11.12) <= 0.05
    elapsed = time.perf_counter() - t0
    verdict(4, "spatial index vs scan (1000 x 1000)", mismatches == 0 and tie and equator and elapsed < 10,
            elapsed, 10)


# -- 5: binning totality ---------------------------------------------------------

NUMERIC = [f for f in FEATURES if DEFAULT_SCHEME.bins[f].kind != "categorical"]
CATEGORICAL = {
    "functional_class": ["interstate", "principal arterial", "minor arterial", "major collector"],
    "access_con": ["yes", "no"],
    "median_type": ["barrier", "curbed", "unprotected", "none"],
    "peak": ["yes", "no"],
}
value = st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False))
feature_rows = st.lists(
    st.fixed_dictionaries({
        **{f: value for f in NUMERIC},
        **{f: st.one_of(st.none(), st.sampled_from(v)) for f, v in CATEGORICAL.items()},
    }),
    min_size=1, max_size=40,
)


def _binning_holds(rows):
    scheme = DEFAULT_SCHEME
    txs = [transaction_from_features(f"{k:03d}", r, "trivial") for k, r in enumerate(rows)]
    db, freq = database_from_transactions(txs)
    for name in FEATURES:
        bins = scheme.bins[name]
        allowed = set(bins.labels) | {bins.zero_label}
        unknown = skipped = 0
        for t, r in zip(txs, rows):
            item = bin_value(scheme, name, r[name])
            present = [i for i in t.items if i.feature == name]
            if item is None:
                skipped += 1
                if present:
                    return False
            elif item.level == "unknown":
                unknown += 1
                if present:
                    return False
            elif present != [item] or (bins.labels and item.level not in allowed):
                return False
        total = sum(f.count for f in freq if f.variable == name)
        if total != db.n - unknown - skipped:
            return False
    boundaries = [("speed", 30.0, "30 - 60 mph"), ("aadt", 40_000, "40,000 – 70,000 vpd"),
                  ("traveltime", 60.0, "1 - 2 hours"), ("median_width", 60.0, "larger than 60 ft")]
    return all(bin_value(scheme, f, v).level == lv for f, v, lv in boundaries)


def test_acceptance_5_binning_totality(verdict):
    outcome = {"ok": True}

    @settings(max_examples=200, deadline=None, database=None)
    @given(feature_rows)
    def check(rows):
        if not _binning_holds(rows):
            outcome["ok"] = False
        assert outcome["ok"]

    t0 = time.perf_counter()
    try:
        check()
    except AssertionError:
        outcome["ok"] = False
    elapsed = time.perf_counter() - t0
    verdict(5, "binning totality", outcome["ok"] and elapsed < 5, elapsed, 5)


# -- 6: end-to-end determinism -------------------------------------------------


def _funnel_reconciles(stages):
    s = stages
    checks = [
        s["parse"]["rows_in"] == s["parse"]["records"] + s["parse"]["malformed"],
        s["filter"]["records_in"] == s["filter"]["records_kept"]
        + sum(v for k, v in s["filter"].items() if k.startswith("excluded_")),
        s["detect"]["records_in"] == s["detect"]["candidates"] + s["detect"]["below_threshold"],
        s["dedup"]["candidates_in"] == s["dedup"]["events"] + s["dedup"]["merged"],
        s["classify"]["events_in"] == s["classify"]["trivial"] + s["classify"]["non_trivial"],
        s["segments"]["features_in"] == s["segments"]["segments"] + s["segments"]["skipped_geometry"],
        s["conflate"]["events_in"] == s["conflate"]["conflated"] + s["conflate"]["rejected_distance"],
        s["conflate"]["events_in"] == s["dedup"]["events"],
        s["itemize"]["events_in"] == s["conflate"]["conflated"],
    ]
    return all(checks)


def _ct_matches(out_dir, db):
    n = db.n
    for name, cons in (("rules_trivial.csv", "nv_severity=trivial"),
                       ("rules_non_trivial.csv", "nv_severity=non-trivial")):
        with open(out_dir / name, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            return False
        for r in rows:
            items = [parse_item(v) for k, v in r.items() if k.startswith("item_") and v != "--"]
            z = Itemset(tuple(items) + (parse_item(cons),))
            ct = int(r["CT"])
            if count_support(db, [z])[z] != ct or r["S"] != round_half_away(Fraction(ct, n), 3):
                return False
    return True


def test_acceptance_6_end_to_end_determinism(corpus, corpus_db, tmp_path, verdict):
    db = corpus_db[0]
    t0 = time.perf_counter()
    reports = []
    for k in range(2):
        cfg = load_config(corpus.config, {"out_dir": str(tmp_path / f"run{k}")}, env={})
        reports.append(run_pipeline(cfg))
    elapsed = time.perf_counter() - t0
    a, b = tmp_path / "run0", tmp_path / "run1"
    identical = all((a / f).read_bytes() == (b / f).read_bytes() for f in OUTPUT_FILES)
    identical &= reports[0].outputs == reports[1].outputs and (a / REPORT_FILE).exists()
    stages = reports[0].stages
    big_enough = stages["conflate"]["conflated"] >= 500 and stages["segments"]["segments"] >= 50
    ok = identical and big_enough and _funnel_reconciles(stages) and _ct_matches(a, db) and elapsed < 10
    verdict(6, "end-to-end determinism and funnel", ok, elapsed, 10)


# -- 7: parameter monotonicity -------------------------------------------------


def test_acceptance_7_parameter_monotonicity(corpus_db, verdict):
    db = corpus_db[0]
    t0 = time.perf_counter()

    def keys(**kw):
        params = MiningParams(**{"min_support": 0.1, "min_confidence": 0.1, "minlen": 3, "maxlen": 5,
                                 "class_feature": CLASS_FEATURE, **kw})
        return {(r.antecedent, r.consequent) for r in mine_rules(db, params)}

    base = keys()
    higher_support = keys(min_support=0.2)
    higher_conf = keys(min_confidence=0.5)
    elapsed = time.perf_counter() - t0
    ok = higher_support < base and higher_conf < base and elapsed < 10
    verdict(7, f"parameter monotonicity ({len(base)} > {len(higher_support)}, {len(higher_conf)} rules)",
            ok, elapsed, 10)
