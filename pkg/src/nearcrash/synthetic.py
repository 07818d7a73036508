"""Deterministic synthetic trajectory and road-network corpus.

The generator lays out a grid of road segments with HPMS-style attributes,
drives trips along them and plants hard-braking episodes whose severity
depends on road and trip attributes, so mined rules have some structure.
It also plants the awkward cases the cleaning stages must handle: short
trips, records with no lead vehicle or a distant one, near-duplicate brakes,
trips far from every road, and a degenerate segment geometry.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from nearcrash.events import STANDARD_GRAVITY

ORIGIN = (42.25, -83.80)  # Ann Arbor area
SAMPLE_CS = 500  # one record every 5 s

HEADER = [
    "Device", "Trip", "Time", "LatitudeWsu", "LongitudeWsu", "GpsSpeedWsu",
    "AxWsu", "CIPV", "Range", "TripStart",
]


@dataclass(frozen=True)
class CorpusPaths:
    trajectory: Path
    segments: Path
    exclusions: Path
    config: Path


def _segments(rng: np.random.Generator, n: int) -> list[dict]:
    feats = []
    cols = 8
    for k in range(n):
        r, c = divmod(k, cols)
        lat0 = ORIGIN[0] + 0.03 * r
        lon0 = ORIGIN[1] + 0.04 * c
        bend = rng.uniform(-0.002, 0.002)
        coords = [
            [lon0, lat0],
            [lon0 + 0.008, lat0 + 0.004 + bend],
            [lon0 + 0.016, lat0 + 0.006],
        ]
        f_system = int(rng.choice([1, 3, 4, 5], p=[0.08, 0.27, 0.58, 0.07]))
        median_type = int(rng.choice([1, 2, 3, 4], p=[0.2, 0.4, 0.3, 0.1]))
        props = {
            "segment_id": str(100 + k),
            "f_system": f_system,
            "access_con": 1 if f_system == 1 else int(rng.choice([1, 3], p=[0.1, 0.9])),
            "shoulder_width": float(rng.choice([0, 0, 0, 2, 6, 10])),
            "lane_width": float(rng.choice([11, 12, 13, 12.4, 11.6])),
            "median_type": median_type,
            "median_width": 0.0 if median_type == 1 else float(rng.choice([20, 40, 50, 80])),
            "speed_limit": float(rng.choice([25, 35, 45, 55, 70])),
            "aadt": float(rng.choice([12_000, 25_000, 33_000, 55_000, 90_000])),
        }
        if k % 17 == 5:
            del props["median_width"]  # missing attribute, loads as unknown
        feats.append({"type": "Feature", "properties": props,
                      "geometry": {"type": "LineString", "coordinates": coords}})
    feats.append({  # degenerate geometry, skipped on load
        "type": "Feature",
        "properties": {"segment_id": "999", "f_system": 4},
        "geometry": {"type": "LineString", "coordinates": [[ORIGIN[1], ORIGIN[0]]]},
    })
    return feats


def _position(coords: list[list[float]], frac: float) -> tuple[float, float]:
    """Point at ``frac`` of the way along the polyline (by vertex-space length)."""
    pts = np.array(coords, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    target = frac * seg.sum()
    acc = 0.0
    for (a, b), length in zip(zip(pts, pts[1:]), seg):
        if acc + length >= target:
            t = (target - acc) / length if length else 0.0
            lon, lat = a + t * (b - a)
            return float(lat), float(lon)
        acc += length
    return float(pts[-1][1]), float(pts[-1][0])


def _severe_prob(props: dict, duration_min: float) -> float:
    z = -0.6
    z += 1.2 if props["median_type"] == 3 else 0.0
    z += 0.9 if duration_min >= 120 else 0.0
    z += 0.5 if 20_000 <= props["aadt"] < 40_000 else 0.0
    z -= 1.0 if props["f_system"] == 3 else 0.0
    z -= 0.6 if props["median_type"] == 2 else 0.0
    return 1 / (1 + math.exp(-z))


def write_corpus(directory: str | Path, seed: int = 2012, n_segments: int = 60, n_trips: int = 140) -> CorpusPaths:
    """Write ``trajectory.csv``, ``segments.geojson``, ``exclude.txt`` and ``config.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    feats = _segments(rng, n_segments)
    roads = [f for f in feats if len(f["geometry"]["coordinates"]) >= 2]
    # the last road is never driven and is listed for exclusion
    driven = roads[:-1]

    rows: list[list] = []
    base_day = datetime(2012, 10, 1)
    for trip_no in range(n_trips):
        device = f"{10100 + trip_no % 45}"
        trip = str(trip_no // 45 + 1)
        seg = driven[trip_no % len(driven)]
        props = seg["properties"]
        if trip_no % 23 == 7:
            duration_min = float(rng.uniform(4, 9.5))  # excluded as too short
        else:
            duration_min = float(rng.choice([rng.uniform(12, 20), rng.uniform(20, 60),
                                             rng.uniform(60, 120), rng.uniform(120, 160)]))
        off_network = trip_no % 37 == 11
        start = base_day + timedelta(days=int(rng.integers(0, 200)),
                                     minutes=int(rng.integers(5 * 60, 21 * 60)))
        n = int(duration_min * 60 * 100 // SAMPLE_CS) + 1
        times = np.arange(n) * SAMPLE_CS
        ax = np.clip(rng.normal(-0.03, 0.08, n), -0.35, 0.35) * STANDARD_GRAVITY
        cipv = (rng.random(n) < 0.85).astype(int)
        rng_m = rng.uniform(3, 30, n)
        speed_ms = props["speed_limit"] * 0.44704 * np.clip(rng.normal(0.8, 0.3, n), 0.1, 1.4)

        # planted brakes, 4 to 12 minutes apart
        t = int(rng.integers(60, 240)) * 100
        while t < times[-1] - 30 * 100:
            k = t // SAMPLE_CS
            severe = rng.random() < _severe_prob(props, duration_min)
            peak = rng.uniform(-1.0, -0.76) if severe else rng.uniform(-0.74, -0.46)
            ax[k] = peak * STANDARD_GRAVITY
            cipv[k], rng_m[k] = 1, rng.uniform(4, 14)
            if k + 1 < n:  # a weaker follow-up sample in the same episode
                ax[k + 1] = max(peak + 0.1, -0.5) * STANDARD_GRAVITY
                cipv[k + 1], rng_m[k + 1] = 1, rng.uniform(4, 14)
            if rng.random() < 0.15:  # a second brake within the dedup gap
                j = k + int(rng.integers(12, 30))
                if j < n:
                    ax[j] = rng.uniform(-0.6, -0.46) * STANDARD_GRAVITY
                    cipv[j], rng_m[j] = 1, rng.uniform(4, 14)
            t += int(rng.integers(240, 720)) * 100

        # a hard brake with nobody ahead, and one with a distant leader
        for k, (c, r) in zip(rng.integers(0, n, 2), ((0, 5.0), (1, 25.0))):
            if abs(ax[k]) < 0.4 * STANDARD_GRAVITY:
                ax[k], cipv[k], rng_m[k] = -0.9 * STANDARD_GRAVITY, c, r

        coords = seg["geometry"]["coordinates"]
        for k in range(n):
            frac = (k % 240) / 239
            frac = frac if (k // 240) % 2 == 0 else 1 - frac
            lat, lon = _position(coords, frac)
            lat += rng.normal(0, 0.00005)
            lon += rng.normal(0, 0.00005)
            if off_network:
                lat += 0.012
            rows.append([
                device, trip, int(times[k]), f"{lat:.7f}", f"{lon:.7f}", f"{speed_ms[k]:.3f}",
                f"{ax[k]:.4f}", int(cipv[k]), "" if cipv[k] == 0 else f"{rng_m[k]:.2f}",
                start.isoformat(),
            ])

    traj = directory / "trajectory.csv"
    with open(traj, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(rows)

    segs = directory / "segments.geojson"
    segs.write_text(json.dumps({"type": "FeatureCollection", "features": feats}, indent=1) + "\n")
    excl = directory / "exclude.txt"
    excl.write_text(f"# never driven\n{roads[-1]['properties']['segment_id']}\n")
    cfg = directory / "config.json"
    cfg.write_text(json.dumps({
        "trajectory": ["trajectory.csv"],
        "segments": "segments.geojson",
        "exclude_segments": "exclude.txt",
        "out_dir": "out",
    }, indent=2) + "\n")
    return CorpusPaths(traj, segs, excl, cfg)
