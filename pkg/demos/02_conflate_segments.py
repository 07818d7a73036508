# Attaching road attributes to events
#
# Each event takes the attributes of the closest road segment. Segments come
# from GeoJSON LineStrings with HPMS-style properties. An R-tree answers the
# nearest-segment query; events too far from every road are set aside.

# %%
from nearcrash.events import NearCrashEvent
from nearcrash.spatial import RoadSegment, build_index, conflate, point_segment_distance

main_st = RoadSegment("11", ((42.280, -83.750), (42.280, -83.740)),
                      f_system="minor arterial", access_con="no", lane_width=12.0,
                      median_type="curbed", median_width=40.0, speed_limit=35.0, aadt=24_000.0)
side_st = RoadSegment("12", ((42.270, -83.750), (42.285, -83.750)),
                      f_system="local", access_con="no", lane_width=11.0,
                      median_type="none", speed_limit=25.0, aadt=3_000.0)

# %%
# Distances are in metres on a local flat projection around the query point.

p = (42.2805, -83.745)
print(point_segment_distance(p, main_st), point_segment_distance(p, side_st))

# %%
index = build_index([main_st, side_st])
events = [
    NearCrashEvent("10101", "1", 12000, 42.2805, -83.745, -0.55, "trivial"),
    NearCrashEvent("10101", "1", 40000, 42.2790, -83.7502, -0.82, "non_trivial"),
    NearCrashEvent("10101", "1", 70000, 42.3000, -83.745, -0.60, "trivial"),  # 2 km away
]
result = conflate(events, index, max_distance_m=100.0)
for ce in result.events:
    print(ce.event.id, "->", ce.segment.segment_id, f"{ce.distance_m:.1f} m")
print("rejected:", result.rejected)
