"""Independent reference implementations the production code is checked against.

Each oracle takes a deliberately different route from the code under test:
distances through 3-D unit vectors at high precision, date overlap by
enumerating days, matching by a flat cross product with no sorting or bisection.
"""
from __future__ import annotations

import datetime as dt

import mpmath

R_KM = mpmath.mpf("6371.0088")
mpmath.mp.dps = 40


def great_circle_km(a, b) -> float:
    """Spherical Vincenty formula (atan2 of cross and dot products) in 40-digit arithmetic."""
    (lat1, lon1), (lat2, lon2) = a, b

    def unit(lat, lon):
        la, lo = mpmath.radians(mpmath.mpf(lat)), mpmath.radians(mpmath.mpf(lon))
        return (mpmath.cos(la) * mpmath.cos(lo), mpmath.cos(la) * mpmath.sin(lo), mpmath.sin(la))

    u, v = unit(lat1, lon1), unit(lat2, lon2)
    cross = (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])
    dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
    return float(R_KM * mpmath.atan2(mpmath.sqrt(sum(c * c for c in cross)), dot))


def day_set(lo: dt.date, hi: dt.date) -> set[dt.date]:
    return {lo + dt.timedelta(days=i) for i in range((hi - lo).days + 1)}


def overlap_by_days(a, b, padding_days: int = 0):
    pad = dt.timedelta(days=padding_days)
    common = day_set(*a) & day_set(b[0] - pad, b[1] + pad)
    return (min(common), max(common)) if common else None


def _local_day(ts: dt.datetime, offset_hours: float) -> dt.date:
    naive_utc = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return (naive_utc + dt.timedelta(hours=offset_hours)).date()


CONFIDENCE = {"Facility": "High", "City": "Medium", "Prefecture": "Low", "Country": "Low"}
RANK = {"High": 3, "Medium": 2, "Low": 1}


def match_oracle(history, g, gaz, padding_days=0, min_confidence="Low", utc_offset_hours=9):
    """Brute-force contact candidates as a set of comparable tuples.

    Every (move, endpoint, fix) triple is tested independently; hits are
    then grouped per (move, endpoint). Negated moves and moves without any
    located endpoint or without a date produce nothing.
    """
    entries = {e.place_iri: e for e in gaz}
    hits: dict[tuple, list[int]] = {}
    for m in g.moves:
        if m.negated:
            continue
        start = m.start_time.day if m.start_time else (m.end_time.day if m.end_time else None)
        end = m.end_time.day if m.end_time else start
        if start is None:
            continue
        window = day_set(start - dt.timedelta(days=padding_days), end + dt.timedelta(days=padding_days))
        for endpoint, loc in (("From", m.from_location), ("To", m.to_location)):
            e = entries.get(loc) if loc else None
            if e is None:
                continue
            for i, f in enumerate(history):
                if _local_day(f.timestamp, utc_offset_hours) not in window:
                    continue
                if great_circle_km((f.latitude, f.longitude), (e.latitude, e.longitude)) <= e.radius_km:
                    hits.setdefault((m.id.text, endpoint, e.place_iri), []).append(i)
    out = set()
    for (mid, endpoint, iri), idx in hits.items():
        e = entries[iri]
        conf = CONFIDENCE[e.level.value]
        if RANK[conf] < RANK[min_confidence]:
            continue
        dist = min(great_circle_km((history[i].latitude, history[i].longitude),
                                   (e.latitude, e.longitude)) for i in idx)
        days = sorted(_local_day(history[i].timestamp, utc_offset_hours) for i in idx)
        out.add((mid, endpoint, iri, tuple(idx), days[0], days[-1], conf, round(dist, 6)))
    return out


def near_boundary(history, gaz, eps_km=1e-6) -> bool:
    """True when a fix lies within ``eps_km`` of a disc edge (float-rounding territory)."""
    return any(abs(great_circle_km(f.position, e.position) - e.radius_km) < eps_km
               for f in history for e in gaz)


# Distances computed with great_circle_km above, frozen.
CITY_PAIRS = [
    ("Tokyo", (35.6762, 139.6503), "Osaka", (34.6937, 135.5023), 392.4418),
    ("Tokyo", (35.6762, 139.6503), "Sapporo", (43.0621, 141.3544), 834.1835),
    ("Tokyo", (35.6762, 139.6503), "Naha", (26.2124, 127.6809), 1550.1601),
    ("Osaka", (34.6937, 135.5023), "Fukuoka", (33.5904, 130.4017), 485.1134),
    ("Tokyo", (35.6762, 139.6503), "Sendai", (38.2682, 140.8694), 307.8846),
    ("Nagoya", (35.1815, 136.9066), "Osaka", (34.6937, 135.5023), 139.0248),
    ("Tokyo", (35.6762, 139.6503), "Chiba", (35.6074, 140.1065), 41.9286),
    ("Osaka", (34.6937, 135.5023), "Nara", (34.6851, 135.8048), 27.6741),
    ("Kyoto", (35.0116, 135.7681), "Osaka", (34.6937, 135.5023), 42.8696),
    ("Tokyo", (35.6762, 139.6503), "Seoul", (37.5665, 126.978), 1149.3589),
    ("Tokyo", (35.6762, 139.6503), "Beijing", (39.9042, 116.4074), 2089.3891),
    ("Osaka", (34.6937, 135.5023), "Wuhan", (30.5928, 114.3055), 2032.2317),
    ("Tokyo", (35.6762, 139.6503), "London", (51.5074, -0.1278), 9558.5746),
    ("Tokyo", (35.6762, 139.6503), "New York", (40.7128, -74.006), 10851.7478),
    ("Tokyo", (35.6762, 139.6503), "Sydney", (-33.8688, 151.2093), 7825.8294),
    ("Tokyo", (35.6762, 139.6503), "Honolulu", (21.3069, -157.8583), 6209.4271),
    ("London", (51.5074, -0.1278), "New York", (40.7128, -74.006), 5570.2299),
    ("Quito", (-0.1807, -78.4678), "Sydney", (-33.8688, 151.2093), 13608.0583),
    ("Honolulu", (21.3069, -157.8583), "Sydney", (-33.8688, 151.2093), 8166.1141),
    ("Sapporo", (43.0621, 141.3544), "Naha", (26.2124, 127.6809), 2246.1746),
]
