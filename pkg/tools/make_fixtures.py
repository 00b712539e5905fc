#!/usr/bin/env python3
"""Regenerate the twelve bundled benchmark scenarios in scenarios/.

Each scenario is one sender/recipient pair on the same day shape:

    09:00-09:10  glasses on at home
    09:10-09:20  glasses off (gap)
    09:20-09:36  glasses on; walk due east at 1 m/s, reaching 900 m at 09:35
    09:40        scenario end (stationary at the far point, glasses off)

Messages are aimed so that each category delivers exactly its target count:
delivered geofences sit on the walking line, delivered markers at the desk or
along the walk, delivered windows inside a wear session; undelivered ones
point at never-visited spots 400-700 m north or at windows inside the gap.

The output is deterministic; a test pins the committed files to this script.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

EARTH_RADIUS_M = 6_371_000.0
DAY = "2021-06-05"
LON0 = -122.33

# (sent, delivered) per category for each pair.
PAIR_TARGETS = {
    1: {"loc": (1, 1), "time": (3, 0), "marker": (3, 3), "spec": (0, 0), "flex": (0, 0)},
    2: {"loc": (2, 0), "time": (3, 1), "marker": (2, 2), "spec": (1, 0), "flex": (0, 0)},
    3: {"loc": (1, 1), "time": (1, 1), "marker": (1, 0), "spec": (1, 0), "flex": (0, 0)},
    4: {"loc": (5, 5), "time": (1, 1), "marker": (2, 2), "spec": (1, 1), "flex": (0, 0)},
    5: {"loc": (0, 0), "time": (2, 1), "marker": (0, 0), "spec": (6, 0), "flex": (1, 0)},
    6: {"loc": (3, 1), "time": (5, 0), "marker": (1, 1), "spec": (0, 0), "flex": (8, 5)},
    7: {"loc": (1, 0), "time": (0, 0), "marker": (7, 1), "spec": (8, 0), "flex": (2, 1)},
    8: {"loc": (1, 1), "time": (1, 1), "marker": (1, 1), "spec": (1, 0), "flex": (6, 6)},
    9: {"loc": (6, 3), "time": (1, 0), "marker": (4, 2), "spec": (0, 0), "flex": (2, 1)},
    10: {"loc": (4, 3), "time": (2, 0), "marker": (2, 2), "spec": (0, 0), "flex": (0, 0)},
    11: {"loc": (1, 1), "time": (1, 0), "marker": (1, 1), "spec": (0, 0), "flex": (4, 4)},
    12: {"loc": (2, 2), "time": (1, 1), "marker": (5, 5), "spec": (1, 0), "flex": (0, 0)},
}

CONTENT_CYCLE = [
    "dog", "bee", "butterfly", "palm_tree", "cherry_blossom", "basketball",
    "bouncing_ball", "pizza", "dolphin", "balloon", "campfire",
    "avatar_wave", "avatar_books", "avatar_bye", "avatar_dance", "avatar_laugh",
    "avatar_thumbs_up", "avatar_heart", "avatar_shrug", "avatar_sleep", "avatar_cheer",
]


def ts(hhmmss: str) -> str:
    return f"{DAY}T{hhmmss}Z"


def offset(lat0: float, east_m: float, north_m: float) -> dict[str, float]:
    """Point east_m/north_m meters from (lat0, LON0) on the reference sphere."""
    m_per_deg = EARTH_RADIUS_M * math.pi / 180.0
    lat = lat0 + north_m / m_per_deg
    lon = LON0 + east_m / (m_per_deg * math.cos(math.radians(lat0)))
    return {"lat": lat, "lon": lon}


def fence(lat0: float, east_m: float, north_m: float, radius: float = 10.0) -> dict:
    center = offset(lat0, east_m, north_m)
    return {"center": center, "radius": radius}


def window(start: str, end: str) -> dict:
    return {"start": ts(start), "end": ts(end)}


def build_pair(k: int) -> dict:
    lat0 = 47.58 + 0.02 * k
    targets = PAIR_TARGETS[k]
    sender, recipient = f"S{k}", f"W{k}"

    home = offset(lat0, 0.0, 0.0)
    far = offset(lat0, 900.0, 0.0)
    markers = [
        {"marker_id": "mk-desk", "position": home},
        {"marker_id": "mk-walk-a", "position": offset(lat0, 550.0, 0.0)},
        {"marker_id": "mk-walk-b", "position": offset(lat0, 600.0, 0.0)},
        {"marker_id": "mk-walk-c", "position": offset(lat0, 650.0, 0.0)},
        {"marker_id": "mk-walk-d", "position": offset(lat0, 700.0, 0.0)},
        {"marker_id": "mk-north-a", "position": offset(lat0, 0.0, 500.0)},
        {"marker_id": "mk-north-b", "position": offset(lat0, 0.0, 600.0)},
        {"marker_id": "mk-north-c", "position": offset(lat0, 0.0, 700.0)},
    ]

    # Schedule slots, deliverable ones first.
    loc_delivered = [fence(lat0, d, 0.0) for d in (100.0, 200.0, 300.0, 400.0, 500.0)]
    loc_undelivered = [fence(lat0, 0.0, n) for n in (400.0, 500.0, 600.0)]
    time_delivered = [window("09:02:00", "09:04:00")]
    gap_windows = [
        window("09:11:00", "09:11:50"),
        window("09:12:00", "09:12:50"),
        window("09:13:00", "09:13:50"),
        window("09:14:00", "09:14:50"),
        window("09:15:00", "09:15:50"),
    ]
    marker_delivered = ["mk-desk", "mk-walk-a", "mk-walk-b", "mk-walk-c", "mk-walk-d"]
    marker_undelivered = ["mk-north-a", "mk-north-b", "mk-north-c"]
    spec_delivered = [
        {"geofence": fence(lat0, 150.0, 0.0), "window": window("09:21:00", "09:25:00"),
         "specificity": "Specific"},
    ]
    spec_undelivered = [
        {"geofence": fence(lat0, 200.0, 0.0), "window": window("09:12:00", "09:13:00"),
         "specificity": "Specific"},
        {"marker": {"marker_id": "mk-walk-a"}, "window": window("09:12:00", "09:13:00"),
         "specificity": "Specific"},
        {"geofence": fence(lat0, 300.0, 0.0), "window": window("09:12:00", "09:13:00"),
         "marker": {"marker_id": "mk-walk-b"}, "specificity": "Specific"},
    ]
    flex_delivered = [
        {"geofence": fence(lat0, 0.0, 400.0), "window": window("09:05:00", "09:06:00"),
         "specificity": "Flexible"},
    ] + [
        {"geofence": fence(lat0, d, 0.0), "window": window("09:12:00", "09:13:00"),
         "specificity": "Flexible"}
        for d in (120.0, 220.0, 320.0, 420.0, 520.0)
    ]
    flex_undelivered = [
        {"geofence": fence(lat0, 0.0, 500.0), "window": window("09:13:00", "09:14:00"),
         "specificity": "Flexible"},
        {"marker": {"marker_id": "mk-north-a"}, "window": window("09:13:00", "09:14:00"),
         "specificity": "Flexible"},
    ]

    def schedules_for(cat: str) -> list[dict]:
        sent, delivered = targets[cat]
        undelivered = sent - delivered
        if cat == "loc":
            picks = loc_delivered[:delivered]
            picks += [loc_undelivered[i % len(loc_undelivered)] for i in range(undelivered)]
            return [{"geofence": g} for g in picks]
        if cat == "time":
            picks = time_delivered[:delivered]
            picks += [gap_windows[i % len(gap_windows)] for i in range(undelivered)]
            return [{"window": w} for w in picks]
        if cat == "marker":
            ids = marker_delivered[:delivered]
            ids += [marker_undelivered[i % len(marker_undelivered)] for i in range(undelivered)]
            return [{"marker": {"marker_id": m}} for m in ids]
        if cat == "spec":
            picks = spec_delivered[:delivered]
            picks += [spec_undelivered[i % len(spec_undelivered)] for i in range(undelivered)]
            return picks
        picks = flex_delivered[:delivered]
        picks += [flex_undelivered[i % len(flex_undelivered)] for i in range(undelivered)]
        return picks

    script = []
    index = 0
    for cat in ("loc", "time", "marker", "spec", "flex"):
        for slot, schedule in enumerate(schedules_for(cat)):
            label = f"{cat}{slot}"
            minute, second = divmod(index, 60)
            script.append(
                {
                    "at": ts(f"08:{55 + minute:02d}:{second:02d}"),
                    "label": label,
                    "sender_id": sender,
                    "recipient_id": recipient,
                    "content_id": CONTENT_CYCLE[index % len(CONTENT_CYCLE)],
                    "scale": 1.0,
                    "voice_note": {"duration": 3.0, "transcript": f"note for {label}"},
                    "schedule": schedule,
                }
            )
            index += 1

    # One declined reaction per pair: the earliest slot that actually delivers.
    declined = next(
        f"{cat}0" for cat in ("marker", "time", "loc", "flex", "spec") if targets[cat][1] > 0
    )

    return {
        "v": 1,
        "name": f"pair{k:02d}",
        "seed": k,
        "tick": 1.0,
        "end": ts("09:40:00"),
        "markers": markers,
        "recipients": [
            {
                "principal": recipient,
                "wear_sessions": [
                    window("09:00:00", "09:10:00"),
                    window("09:20:00", "09:36:00"),
                ],
                "trajectory": [
                    {"t": ts("09:00:00"), **home},
                    {"t": ts("09:20:00"), **home},
                    {"t": ts("09:35:00"), **far},
                    {"t": ts("09:40:00"), **far},
                ],
            }
        ],
        "sender_script": script,
        "consent_policy": {"default": "yes", "by_label": {declined: "no"}},
    }


def main() -> None:
    out_dir = Path(__file__).resolve().parent.parent / "scenarios"
    out_dir.mkdir(exist_ok=True)
    for k in sorted(PAIR_TARGETS):
        path = out_dir / f"pair{k:02d}.json"
        path.write_text(json.dumps(build_pair(k), indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
