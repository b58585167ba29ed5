"""Spatiotemporal matching of a resident's location history against patient moves.

Places are discs (centroid plus enclosing radius) looked up in a gazetteer.
A fix matches a move endpoint when its local calendar date falls inside the
move's day interval, widened by the configured padding, and its position lies
within the endpoint's disc. The two endpoints of a move are matched
independently; no route between them is assumed.
"""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from plod.model import InvalidArgument, MoveAction, Pid, PlodGraph, is_located

EARTH_RADIUS_KM = 6371.0088
DEFAULT_UTC_OFFSET_HOURS = 9


class Granularity(str, enum.Enum):
    FACILITY = "Facility"
    CITY = "City"
    PREFECTURE = "Prefecture"
    COUNTRY = "Country"
    OVERSEAS = "Overseas"
    NONE = "None"

    @property
    def specificity(self) -> int:
        """Higher is more specific; non-geocodable levels rank lowest."""
        return _SPECIFICITY[self]

    @property
    def geocodable(self) -> bool:
        return self not in (Granularity.OVERSEAS, Granularity.NONE)


_SPECIFICITY = {
    Granularity.FACILITY: 5, Granularity.CITY: 4, Granularity.PREFECTURE: 3,
    Granularity.COUNTRY: 2, Granularity.OVERSEAS: 1, Granularity.NONE: 0,
}


class Confidence(str, enum.Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    @property
    def rank(self) -> int:
        return {"High": 3, "Medium": 2, "Low": 1}[self.value]

    @classmethod
    def for_level(cls, level: Granularity) -> "Confidence":
        if level is Granularity.FACILITY:
            return cls.HIGH
        if level is Granularity.CITY:
            return cls.MEDIUM
        return cls.LOW


class Endpoint(str, enum.Enum):
    FROM = "From"
    TO = "To"


def _check_coords(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise InvalidArgument(f"coordinates out of range: ({lat}, {lon})")


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) pairs in degrees."""
    (lat1, lon1), (lat2, lon2) = a, b
    _check_coords(lat1, lon1)
    _check_coords(lat2, lon2)
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def interval_overlap(a: tuple[dt.date, dt.date], b: tuple[dt.date, dt.date],
                     padding_days: int = 0) -> Optional[tuple[dt.date, dt.date]]:
    """Intersect ``a`` with ``b`` widened by ``padding_days`` on both ends."""
    if padding_days < 0:
        raise InvalidArgument("padding_days must be non-negative")
    pad = dt.timedelta(days=padding_days)
    start = max(a[0], b[0] - pad)
    end = min(a[1], b[1] + pad)
    return (start, end) if start <= end else None


@dataclass(frozen=True)
class GazetteerEntry:
    place_iri: str
    label: str
    latitude: float
    longitude: float
    radius_km: float
    level: Granularity

    def __post_init__(self):
        _check_coords(self.latitude, self.longitude)
        if not self.radius_km > 0:
            raise InvalidArgument(f"{self.place_iri}: radius must be positive")
        if not self.level.geocodable:
            raise InvalidArgument(f"{self.place_iri}: level {self.level.value} cannot be geocoded")
        if self.level is Granularity.FACILITY and self.radius_km > 1:
            raise InvalidArgument(f"{self.place_iri}: facility radius must be at most 1 km")

    @property
    def position(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


class Gazetteer:
    def __init__(self, entries: Iterable[GazetteerEntry] = ()):
        self._by_iri: dict[str, GazetteerEntry] = {}
        self._by_label: dict[str, list[GazetteerEntry]] = {}
        for e in entries:
            if e.place_iri in self._by_iri:
                raise InvalidArgument(f"duplicate gazetteer IRI {e.place_iri}")
            self._by_iri[e.place_iri] = e
            self._by_label.setdefault(e.label.casefold(), []).append(e)

    def __len__(self) -> int:
        return len(self._by_iri)

    def __iter__(self):
        return iter(self._by_iri.values())

    def __contains__(self, iri) -> bool:
        return iri in self._by_iri

    def get(self, iri: str) -> Optional[GazetteerEntry]:
        return self._by_iri.get(iri) if iri else None

    def by_label(self, label: str) -> list[GazetteerEntry]:
        return list(self._by_label.get(label.casefold(), ()))

    def scaled(self, factor: float) -> "Gazetteer":
        """Copy with every radius multiplied by ``factor``; facility caps are not enforced."""
        g = Gazetteer()
        for e in self:
            scaled = object.__new__(GazetteerEntry)
            object.__setattr__(scaled, "__dict__", {**e.__dict__, "radius_km": e.radius_km * factor})
            g._by_iri[e.place_iri] = scaled
            g._by_label.setdefault(e.label.casefold(), []).append(scaled)
        return g

    @classmethod
    def from_records(cls, rows: Iterable[dict]) -> "Gazetteer":
        return cls(GazetteerEntry(
            place_iri=r["iri"], label=r["label"], latitude=float(r["lat"]),
            longitude=float(r["lon"]), radius_km=float(r["radius_km"]),
            level=Granularity(r["level"]),
        ) for r in rows)

    @classmethod
    def load(cls, path) -> "Gazetteer":
        """Load a gazetteer from JSON (list or ``{"entries": [...]}``) or delimited text."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".json":
            doc = json.loads(text)
            return cls.from_records(doc["entries"] if isinstance(doc, dict) else doc)
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",\t;")
        return cls.from_records(csv.DictReader(text.splitlines(), dialect=dialect))

    @classmethod
    def default(cls) -> "Gazetteer":
        """The shipped gazetteer: 47 prefectures plus a few cities and facilities."""
        with resources.files("plod.data").joinpath("gazetteer.json").open(encoding="utf-8") as fh:
            return cls.from_records(json.load(fh)["entries"])


def locate(place_iri: Optional[str], gaz: Gazetteer) -> Optional[GazetteerEntry]:
    return gaz.get(place_iri) if place_iri else None


@dataclass(frozen=True)
class LocationFix:
    timestamp: dt.datetime
    latitude: float
    longitude: float
    accuracy_m: float = 0.0

    def __post_init__(self):
        _check_coords(self.latitude, self.longitude)
        if self.accuracy_m < 0:
            raise InvalidArgument("accuracy_m must be non-negative")
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=dt.timezone.utc))

    @property
    def position(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)

    def local_date(self, utc_offset_hours: float = DEFAULT_UTC_OFFSET_HOURS) -> dt.date:
        tz = dt.timezone(dt.timedelta(hours=utc_offset_hours))
        return self.timestamp.astimezone(tz).date()


def parse_timestamp(text: str) -> dt.datetime:
    ts = dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
    return ts if ts.tzinfo else ts.replace(tzinfo=dt.timezone.utc)


def history_from_json(rows: Sequence[dict]) -> list[LocationFix]:
    return [LocationFix(parse_timestamp(r["timestamp"]), float(r["lat"]), float(r["lon"]),
                        float(r.get("accuracy_m", 0.0))) for r in rows]


def history_to_json(history: Sequence[LocationFix]) -> list[dict]:
    return [{"timestamp": f.timestamp.isoformat(), "lat": f.latitude, "lon": f.longitude,
             "accuracy_m": f.accuracy_m} for f in history]


def load_history(path) -> list[LocationFix]:
    """Read a JSON array of fixes; input order is kept (sortedness is checked when matching)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return history_from_json(json.loads(text)) if text.strip() else []


@dataclass(frozen=True)
class MatchConfig:
    padding_days: int = 0
    max_candidates: Optional[int] = None
    min_confidence: Confidence = Confidence.LOW
    utc_offset_hours: float = DEFAULT_UTC_OFFSET_HOURS

    def __post_init__(self):
        if self.padding_days < 0:
            raise InvalidArgument("padding_days must be non-negative")
        if self.max_candidates is not None and self.max_candidates < 0:
            raise InvalidArgument("max_candidates must be non-negative")

    def to_json(self) -> dict:
        return {"timePaddingDays": self.padding_days, "maxCandidates": self.max_candidates,
                "minConfidence": self.min_confidence.value, "utcOffsetHours": self.utc_offset_hours}


@dataclass(frozen=True)
class ContactCandidate:
    move_id: Pid
    patient_id: Optional[Pid]
    fix_indices: tuple[int, ...]
    overlap_start: dt.date
    overlap_end: dt.date
    endpoint: Endpoint
    place_iri: str
    distance_km: float
    confidence: Confidence

    def sort_key(self) -> tuple:
        return (self.overlap_start, self.move_id.text, self.endpoint is Endpoint.TO)

    def to_json(self) -> dict:
        return {
            "moveId": self.move_id.text,
            "patientId": self.patient_id.text if self.patient_id else None,
            "fixIndices": list(self.fix_indices),
            "overlapStart": self.overlap_start.isoformat(),
            "overlapEnd": self.overlap_end.isoformat(),
            "endpoint": self.endpoint.value,
            "place": self.place_iri,
            "distanceKm": round(self.distance_km, 6),
            "confidence": self.confidence.value,
        }


@dataclass
class RiskReport:
    candidates: list[ContactCandidate]
    config: MatchConfig
    fixes: int = 0
    moves: int = 0
    unmatchable_moves: int = 0
    undated_moves: int = 0
    negated_moves: int = 0
    unlocated_endpoints: int = 0
    filtered_candidates: int = 0
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "candidates": [c.to_json() for c in self.candidates],
            "tallies": {
                "fixes": self.fixes,
                "moves": self.moves,
                "candidates": len(self.candidates),
                "unmatchableMoves": self.unmatchable_moves,
                "undatedMoves": self.undated_moves,
                "negatedMoves": self.negated_moves,
                "unlocatedEndpoints": self.unlocated_endpoints,
                "filteredCandidates": self.filtered_candidates,
            },
            "config": self.config.to_json(),
        }


def check_sorted(history: Sequence[LocationFix]) -> None:
    for i in range(1, len(history)):
        if history[i].timestamp < history[i - 1].timestamp:
            raise InvalidArgument(f"location history is not sorted by timestamp (index {i})")


def _endpoints(m: MoveAction):
    return ((Endpoint.FROM, m.from_location), (Endpoint.TO, m.to_location))


def match_history(history: Sequence[LocationFix], g: PlodGraph, gaz: Gazetteer,
                  cfg: MatchConfig = MatchConfig()) -> RiskReport:
    """Find every (move, endpoint) the resident may have shared with a patient.

    Moves whose endpoints are both empty or absent are tallied as
    unmatchable. Negated moves (a place the patient did *not* visit) never
    produce candidates.
    """
    check_sorted(history)
    dates = [f.local_date(cfg.utc_offset_hours) for f in history]
    pad = dt.timedelta(days=cfg.padding_days)
    report = RiskReport(candidates=[], config=cfg, fixes=len(history), moves=len(g.moves))

    found: list[ContactCandidate] = []
    for m in g.moves:
        if not any(is_located(loc) for _, loc in _endpoints(m)):
            report.unmatchable_moves += 1
            continue
        if m.negated:
            report.negated_moves += 1
            continue
        interval = m.interval
        if interval is None:
            report.undated_moves += 1
            continue
        lo = bisect.bisect_left(dates, interval[0] - pad)
        hi = bisect.bisect_right(dates, interval[1] + pad)
        for endpoint, loc in _endpoints(m):
            if not is_located(loc):
                continue
            entry = locate(loc, gaz)
            if entry is None:
                report.unlocated_endpoints += 1
                continue
            hits, best = [], math.inf
            for i in range(lo, hi):
                d = haversine_km(history[i].position, entry.position)
                if d <= entry.radius_km:
                    hits.append(i)
                    best = min(best, d)
            if hits:
                found.append(ContactCandidate(
                    move_id=m.id, patient_id=m.agent, fix_indices=tuple(hits),
                    overlap_start=dates[hits[0]], overlap_end=dates[hits[-1]],
                    endpoint=endpoint, place_iri=entry.place_iri, distance_km=best,
                    confidence=Confidence.for_level(entry.level),
                ))

    kept = [c for c in found if c.confidence.rank >= cfg.min_confidence.rank]
    kept.sort(key=ContactCandidate.sort_key)
    report.filtered_candidates = len(found) - len(kept)
    if cfg.max_candidates is not None:
        kept = kept[:cfg.max_candidates]
    report.candidates = kept
    return report
