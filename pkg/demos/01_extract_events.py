# Extracting hard-braking events from a trajectory
#
# A trajectory file has one row per sample: device, trip, time in
# centiseconds, position, speed in m/s, longitudinal acceleration in m/s^2 and
# the lead-vehicle columns. We build a tiny trip by hand and run it through the
# parse -> filter -> detect -> dedup -> classify chain.

# %%
import csv
import tempfile
from pathlib import Path

from nearcrash.events import STANDARD_GRAVITY, extract_events, parse_trajectory

workdir = Path(tempfile.mkdtemp())
path = workdir / "trip.csv"

# Fifteen minutes at one sample per second. Four brakes are planted:
# two mild ones 60 s apart, one hard one, and one that is too gentle to count.
brakes = {120: -0.50, 180: -0.55, 400: -0.90, 700: -0.30}

with open(path, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["Device", "Trip", "Time", "LatitudeWsu", "LongitudeWsu",
                "GpsSpeedWsu", "AxWsu", "CIPV", "Range", "TripStart"])
    for sec in range(900):
        ax = brakes.get(sec, 0.0) * STANDARD_GRAVITY
        w.writerow([10101, 1, sec * 100, 42.28, -83.74 + sec * 2e-5, 13.4, ax, 1, 8.0,
                    "2012-10-02T07:45:00"])

# %%
# Parsing checks every row and groups them by (device, trip).

parsed = parse_trajectory(path)
print(parsed.rows, "rows,", parsed.malformed, "malformed")

# %%
# The two mild brakes are 60 s apart, so they collapse into one event located
# at the stronger sample. The -0.30 g dip never reaches the detection threshold.

result = extract_events(parsed)
for e in result.events:
    print(e.id, e.peak_decel_g, e.severity, e.speed_mph, e.trip_duration_min, e.peak_hour)

print(result.tally)
