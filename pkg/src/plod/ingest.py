"""Structured press-release records: conversion to PLOD graphs and corpus analysis.

Records are JSON objects with camelCase keys::

    {"releaseId": "12202001311", "publisher": "Chiba", "datePublished": "2020-01-31",
     "url": "https://...", "isReferencedBy": "https://...", "numberOfPatients": 1,
     "traceStyle": "DetailedSection", "rawTraceText": "...",
     "patients": [{"age": "20s", "gender": "Female", "homeLocation": "Chiba",
                   "dateConfirmed": "2020-01-31", "disease": "COVID-19",
                   "moves": [{"start": "2020-01-16", "end": "2020-01-16",
                              "from": "Tokyo", "to": "Osaka",
                              "instrument": {"value": "Airplane", "lang": "ja"},
                              "rawText": "...", "negated": false, "homeReference": false,
                              "sameAsCase": {"releaseId": "...", "patient": 1}}]}]}

Place references are gazetteer labels or IRIs; ``"overseas"`` marks a
non-geocodable foreign location.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import enum
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from plod.match import Gazetteer, GazetteerEntry, Granularity
from plod.model import (
    Event, InfectiousDisease, InvalidArgument, IssueCode, Literal, MedicalCode, MoveAction,
    Patient, Pid, Place, PlodDate, PlodGraph, Report, ValidationIssue, event_id,
    make_move_id, make_patient_id, make_report_id, parse_pid,
)

log = logging.getLogger(__name__)

OVERSEAS_TOKENS = frozenset({"overseas", "oversea", "abroad"})


class IngestError(ValueError):
    pass


class ReferenceCycleError(IngestError):
    def __init__(self, cycle: Sequence[tuple[str, int]]):
        path = " -> ".join(f"{rid}/P{n:02d}" for rid, n in cycle)
        super().__init__(f"reference cycle: {path}")
        self.cycle = tuple(cycle)


class TraceStyle(str, enum.Enum):
    DETAILED_SECTION = "DetailedSection"
    MENTION_IN_BODY = "MentionInBody"
    NON_SPECIFIC = "NonSpecific"
    NO_EXPOSURE = "NoExposure"
    NOT_AVAILABLE = "NotAvailable"
    OTHER = "Other"
    NO_CASE_DESCRIPTION = "NoCaseDescription"


class TraceCategory(str, enum.Enum):
    DETAILED_TRACE = "DetailedTrace"
    MENTIONS_OF_TRACE = "MentionsOfTrace"
    NON_SPECIFIC_TRACE = "NonSpecificTrace"
    NO_PUBLIC_EXPOSURE = "NoPublicExposure"
    NOT_AVAILABLE = "NotAvailable"
    OTHERS = "Others"
    NO_CASE_DESCRIPTION = "NoCaseDescription"

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    TraceCategory.DETAILED_TRACE: "Detailed description of trace",
    TraceCategory.MENTIONS_OF_TRACE: "Mentions of trace",
    TraceCategory.NON_SPECIFIC_TRACE: "Non-specific description of trace",
    TraceCategory.NO_PUBLIC_EXPOSURE: "No public exposure",
    TraceCategory.NOT_AVAILABLE: "Not available",
    TraceCategory.OTHERS: "Others",
    TraceCategory.NO_CASE_DESCRIPTION: "No case description",
}


# --- records

def _date(v) -> Optional[dt.date]:
    if v is None or isinstance(v, dt.date):
        return v
    return dt.date.fromisoformat(v[:10])


def _iso(d: Optional[dt.date]) -> Optional[str]:
    return d.isoformat() if d else None


@dataclass(frozen=True)
class CaseRef:
    release_id: str
    patient: int = 1


@dataclass(frozen=True)
class MoveRecord:
    start: Optional[dt.date] = None
    end: Optional[dt.date] = None
    from_: Optional[str] = None
    to: Optional[str] = None
    instrument: Optional[Literal] = None
    raw_text: str = ""
    negated: bool = False
    same_as_case: Optional[CaseRef] = None
    home_reference: bool = False
    derived_from: Optional[str] = None
    inferred: tuple[str, ...] = ()

    @classmethod
    def from_json(cls, d: dict) -> "MoveRecord":
        inst = d.get("instrument")
        if isinstance(inst, str):
            inst = Literal(inst)
        elif isinstance(inst, dict):
            inst = Literal(inst["value"], lang=inst.get("lang"))
        ref = d.get("sameAsCase")
        return cls(
            start=_date(d.get("start")), end=_date(d.get("end")),
            from_=d.get("from"), to=d.get("to"), instrument=inst,
            raw_text=d.get("rawText") or "", negated=bool(d.get("negated", False)),
            same_as_case=CaseRef(ref["releaseId"], int(ref.get("patient", 1))) if ref else None,
            home_reference=bool(d.get("homeReference", False)),
            derived_from=d.get("derivedFrom"), inferred=tuple(d.get("inferred", ())),
        )

    def to_json(self) -> dict:
        out: dict = {"start": _iso(self.start), "end": _iso(self.end),
                     "from": self.from_, "to": self.to}
        if self.instrument is not None:
            out["instrument"] = ({"value": self.instrument.lexical, "lang": self.instrument.lang}
                                 if self.instrument.lang else self.instrument.lexical)
        if self.raw_text:
            out["rawText"] = self.raw_text
        if self.negated:
            out["negated"] = True
        if self.same_as_case:
            out["sameAsCase"] = {"releaseId": self.same_as_case.release_id,
                                 "patient": self.same_as_case.patient}
        if self.home_reference:
            out["homeReference"] = True
        if self.derived_from:
            out["derivedFrom"] = self.derived_from
        if self.inferred:
            out["inferred"] = list(self.inferred)
        return out


@dataclass(frozen=True)
class PatientRecord:
    disease: str
    age: Optional[str] = None
    gender: Optional[str] = None
    home_location: Optional[str] = None
    date_confirmed: Optional[dt.date] = None
    moves: tuple[MoveRecord, ...] = ()

    @classmethod
    def from_json(cls, d: dict) -> "PatientRecord":
        return cls(disease=d["disease"], age=d.get("age"), gender=d.get("gender"),
                   home_location=d.get("homeLocation"), date_confirmed=_date(d.get("dateConfirmed")),
                   moves=tuple(MoveRecord.from_json(m) for m in d.get("moves", ())))

    def to_json(self) -> dict:
        return {"age": self.age, "gender": self.gender, "homeLocation": self.home_location,
                "dateConfirmed": _iso(self.date_confirmed), "disease": self.disease,
                "moves": [m.to_json() for m in self.moves]}


@dataclass(frozen=True)
class ReleaseRecord:
    release_id: str
    publisher: str
    date_published: dt.date
    url: str
    trace_style: TraceStyle = TraceStyle.DETAILED_SECTION
    is_referenced_by: Optional[str] = None
    number_of_patients: Optional[int] = None
    patients: tuple[PatientRecord, ...] = ()
    raw_trace_text: Optional[str] = None
    synthetic: bool = False

    def __post_init__(self):
        if not self.release_id:
            raise InvalidArgument("releaseId must be non-empty")

    @classmethod
    def from_json(cls, d: dict) -> "ReleaseRecord":
        try:
            return cls(
                release_id=d["releaseId"], publisher=d["publisher"],
                date_published=_date(d["datePublished"]), url=d["url"],
                trace_style=TraceStyle(d.get("traceStyle", "DetailedSection")),
                is_referenced_by=d.get("isReferencedBy"),
                number_of_patients=d.get("numberOfPatients"),
                patients=tuple(PatientRecord.from_json(p) for p in d.get("patients", ())),
                raw_trace_text=d.get("rawTraceText"), synthetic=bool(d.get("synthetic", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"malformed release record {d.get('releaseId', '?')!r}: {exc!r}") from exc

    def to_json(self) -> dict:
        out = {"releaseId": self.release_id, "publisher": self.publisher,
               "datePublished": self.date_published.isoformat(), "url": self.url,
               "isReferencedBy": self.is_referenced_by, "numberOfPatients": self.number_of_patients,
               "traceStyle": self.trace_style.value, "rawTraceText": self.raw_trace_text,
               "patients": [p.to_json() for p in self.patients]}
        if self.synthetic:
            out["synthetic"] = True
        return out

    def all_moves(self):
        """Yield ``(patient ordinal, move ordinal, move)`` in input order."""
        for i, p in enumerate(self.patients, 1):
            for j, m in enumerate(p.moves, 1):
                yield i, j, m


def load_records(path) -> list[ReleaseRecord]:
    """Load one record, an array of records, or every ``*.json`` under a directory."""
    path = Path(path)
    if path.is_dir():
        out: list[ReleaseRecord] = []
        for p in sorted(path.glob("*.json")):
            out.extend(load_records(p))
        return out
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON: {exc}") from exc
    return [ReleaseRecord.from_json(d) for d in (doc if isinstance(doc, list) else [doc])]


def dump_records(records: Iterable[ReleaseRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([r.to_json() for r in records], fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def shipped_path(name: str) -> Path:
    return Path(str(resources.files("plod.data").joinpath(name)))


# --- registries

@dataclass(frozen=True)
class DiseaseInfo:
    disease: InfectiousDisease
    code: Optional[MedicalCode]


@dataclass
class Registry:
    diseases: dict[str, DiseaseInfo]
    gazetteer: Gazetteer

    def disease(self, key: str) -> DiseaseInfo:
        for k, v in self.diseases.items():
            if k.casefold() == key.casefold() or v.disease.iri == key:
                return v
        raise IngestError(f"unknown disease key {key!r}")

    @classmethod
    def load_diseases(cls, path) -> dict[str, DiseaseInfo]:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        out = {}
        for key, d in doc.items():
            c = d.get("code")
            code = MedicalCode(c["iri"], c["codeValue"], c["codingSystem"]) if c else None
            name = d.get("name")
            out[key] = DiseaseInfo(InfectiousDisease(
                iri=d["iri"], label=d.get("label"),
                name=Literal(name["value"], lang=name.get("lang")) if name else None,
                infectious_agent=d.get("infectiousAgent"), code=code.iri if code else None,
            ), code)
        return out


@lru_cache(maxsize=None)
def default_gazetteer() -> Gazetteer:
    return Gazetteer.default()


def default_registry() -> Registry:
    return Registry(Registry.load_diseases(shipped_path("diseases.json")), default_gazetteer())


def lookup_place(ref: Optional[str], gaz: Gazetteer) -> Optional[GazetteerEntry]:
    """Resolve a label or IRI against the gazetteer; ambiguous labels resolve to nothing."""
    if not ref:
        return None
    entry = gaz.get(ref)
    if entry is not None:
        return entry
    matches = gaz.by_label(ref)
    return matches[0] if len(matches) == 1 else None


def is_overseas(ref: Optional[str]) -> bool:
    return bool(ref) and ref.strip().casefold() in OVERSEAS_TOKENS


# --- conversion

def _place(ref: Optional[str], gaz: Gazetteer, what: str) -> Optional[Place]:
    if not ref:
        return None
    entry = lookup_place(ref, gaz)
    if entry is not None:
        return Place(entry.place_iri, entry.label)
    if "://" in ref:
        tail = ref.rstrip("/").rsplit("/", 1)[-1].rsplit("#", 1)[-1]
        return Place(ref, tail or ref)
    raise IngestError(f"{what}: unknown place {ref!r}")


def ingest(r: ReleaseRecord, registry: Optional[Registry] = None) -> PlodGraph:
    """Convert one release record into a PLOD graph."""
    registry = registry or default_registry()
    gaz = registry.gazetteer
    try:
        ev = event_id(r.release_id)
    except InvalidArgument as exc:
        raise IngestError(str(exc)) from exc

    places: dict[str, Place] = {}
    diseases: dict[str, DiseaseInfo] = {}

    def place_iri(ref, what) -> Optional[str]:
        p = _place(ref, gaz, what)
        if p is None:
            return None
        places.setdefault(p.iri, p)
        return p.iri

    rid = make_report_id(ev, 1)
    report = Report(
        id=rid, label=rid.text, main_entity=ev,
        number_of_patients=r.number_of_patients if r.number_of_patients is not None else len(r.patients),
        date_published=PlodDate.of(r.date_published),
        publisher=place_iri(r.publisher, f"{r.release_id} publisher"),
        url=r.url, is_referenced_by=r.is_referenced_by,
    )
    patients, moves = [], []
    for i, pr in enumerate(r.patients, 1):
        pid = make_patient_id(ev, i)
        info = registry.disease(pr.disease)
        diseases.setdefault(info.disease.iri, info)
        patients.append(Patient(
            id=pid, label=pid.text, subject_of=ev, health_condition=info.disease.iri,
            date_confirmed=PlodDate.of(pr.date_confirmed) if pr.date_confirmed else None,
            age=pr.age, gender=pr.gender,
            home_location=place_iri(pr.home_location, f"{pid.text} homeLocation"),
        ))
        for j, mr in enumerate(pr.moves, 1):
            mid = make_move_id(pid, j)
            moves.append(_move(mid, pid, mr, place_iri))

    codes = {i.code.iri: i.code for i in diseases.values() if i.code is not None}
    return PlodGraph(
        events=(Event(ev, ev.text),), reports=(report,), patients=patients, moves=moves,
        places=sorted(places.values(), key=lambda p: p.iri),
        diseases=sorted((i.disease for i in diseases.values()), key=lambda d: d.iri),
        codes=sorted(codes.values(), key=lambda c: c.iri),
    )


def _move(mid: Pid, pid: Pid, mr: MoveRecord, place_iri) -> MoveAction:
    def endpoint(ref, what) -> str:
        # negated, cross-referenced and non-geocodable endpoints stay empty
        if mr.negated or mr.same_as_case is not None or not ref or is_overseas(ref):
            return ""
        return place_iri(ref, f"{mid.text} {what}")

    return MoveAction(
        id=mid, label=mid.text, agent=pid,
        start_time=PlodDate.of(mr.start) if mr.start else None,
        end_time=PlodDate.of(mr.end) if mr.end else None,
        from_location=endpoint(mr.from_, "fromLocation"),
        to_location=endpoint(mr.to, "toLocation"),
        instrument=mr.instrument, raw_text=mr.raw_text or None, negated=mr.negated,
        derived_from=parse_pid(mr.derived_from) if mr.derived_from else None,
        inferred=tuple(sorted(f"{e}Location" for e in mr.inferred)),
    )


def ingest_batch(records: Sequence[ReleaseRecord], registry: Optional[Registry] = None) -> list[PlodGraph]:
    """Ingest several records, ordered by release ID. Duplicate IDs are an error."""
    dupes = [k for k, n in Counter(r.release_id for r in records).items() if n > 1]
    if dupes:
        raise IngestError(f"duplicate releaseId in batch: {', '.join(sorted(dupes))}")
    registry = registry or default_registry()
    return [ingest(r, registry) for r in sorted(records, key=lambda r: r.release_id)]


# --- inference for recoverable trace patterns

def resolve_references(corpus: Sequence[ReleaseRecord], r: ReleaseRecord,
                       issues: Optional[list[ValidationIssue]] = None) -> ReleaseRecord:
    """Replace "same as case X" moves with copies of the referenced patient's moves.

    References are followed transitively. A reference to a release or
    patient outside ``corpus`` is left in place and reported as a
    ``DANGLING_REF`` warning; a cycle raises :class:`ReferenceCycleError`.
    """
    index = {rec.release_id: rec for rec in corpus}
    index.setdefault(r.release_id, r)
    memo: dict[tuple[str, int], tuple[MoveRecord, ...]] = {}

    def moves_of(key: tuple[str, int], stack: list[tuple[str, int]]) -> tuple[MoveRecord, ...]:
        if key in memo:
            return memo[key]
        rec = r if key[0] == r.release_id else index[key[0]]
        out: list[MoveRecord] = []
        for j, m in enumerate(rec.patients[key[1] - 1].moves, 1):
            ref = m.same_as_case
            if ref is None:
                out.append(m)
                continue
            target = (ref.release_id, ref.patient)
            if target in stack or target == key:
                path = stack[stack.index(target):] if target in stack else []
                raise ReferenceCycleError(path + [key, target])
            tgt = index.get(target[0])
            if tgt is None or not 1 <= target[1] <= len(tgt.patients):
                if issues is not None:
                    issues.append(ValidationIssue(
                        IssueCode.DANGLING_REF, f"{key[0]}-P{key[1]:02d}-M{j:02d}",
                        f"referenced case {target[0]}/P{target[1]:02d} not found"))
                out.append(m)
                continue
            src_patient = f"{target[0]}-P{target[1]:02d}"
            for k, src in enumerate(moves_of(target, stack + [key]), 1):
                out.append(dataclasses.replace(
                    src, derived_from=src.derived_from or f"{src_patient}-M{k:02d}"))
        memo[key] = tuple(out)
        return memo[key]

    patients = []
    changed = False
    for i, p in enumerate(r.patients, 1):
        if not any(m.same_as_case for m in p.moves):
            patients.append(p)
            continue
        new_moves = moves_of((r.release_id, i), [])
        changed |= new_moves != p.moves
        patients.append(dataclasses.replace(p, moves=new_moves))
    return dataclasses.replace(r, patients=tuple(patients)) if changed else r


def infer_home_location(r: ReleaseRecord, gaz: Optional[Gazetteer] = None,
                        issues: Optional[list[ValidationIssue]] = None) -> ReleaseRecord:
    """Fill the missing endpoint of "home" moves with the publisher's place.

    A move with neither endpoint is read as a trip home and gets its
    destination filled. Explicit endpoints are never overwritten.
    """
    gaz = gaz or default_gazetteer()
    targets = [(i, j) for i, j, m in r.all_moves()
               if m.home_reference and not m.negated and not (m.from_ and m.to)]
    if not targets:
        return r
    entry = lookup_place(r.publisher, gaz)
    if entry is None:
        msg = f"publisher {r.publisher!r} not in gazetteer; home not inferred"
        log.warning("%s: %s", r.release_id, msg)
        if issues is not None:
            issues.append(ValidationIssue(IssueCode.MISSING_LOCATION, r.release_id, msg))
        return r
    patients = list(r.patients)
    for i, j in targets:
        p = patients[i - 1]
        m = p.moves[j - 1]
        if m.to:
            m = dataclasses.replace(m, from_=entry.place_iri, inferred=m.inferred + ("from",))
        else:
            m = dataclasses.replace(m, to=entry.place_iri, inferred=m.inferred + ("to",))
        moves = list(p.moves)
        moves[j - 1] = m
        patients[i - 1] = dataclasses.replace(p, moves=tuple(moves))
    return dataclasses.replace(r, patients=tuple(patients))


def prepare_corpus(records: Sequence[ReleaseRecord], gaz: Optional[Gazetteer] = None,
                   issues: Optional[list[ValidationIssue]] = None) -> list[ReleaseRecord]:
    """Home inference on every record, then cross-reference resolution."""
    inferred = [infer_home_location(r, gaz, issues) for r in records]
    return [resolve_references(inferred, r, issues) for r in inferred]


# --- categorization and statistics

def endpoint_granularity(ref: Optional[str], gaz: Gazetteer, negated: bool = False) -> Granularity:
    if not ref:
        return Granularity.NONE
    if is_overseas(ref):
        return Granularity.OVERSEAS
    entry = lookup_place(ref, gaz)
    if entry is None:
        return Granularity.NONE
    if negated:
        # "not in <country>" points abroad; any other negated area is unusable
        return Granularity.OVERSEAS if entry.level is Granularity.COUNTRY else Granularity.NONE
    return entry.level


def classify_granularity(m: MoveRecord, gaz: Optional[Gazetteer] = None) -> tuple[Granularity, Granularity]:
    gaz = gaz or default_gazetteer()
    return (endpoint_granularity(m.from_, gaz, m.negated),
            endpoint_granularity(m.to, gaz, m.negated))


def step_granularity(m: MoveRecord, gaz: Optional[Gazetteer] = None) -> Granularity:
    """The most specific of a move's two endpoint levels."""
    return max(classify_granularity(m, gaz), key=lambda g: g.specificity)


def _is_geocodable(m: MoveRecord, gaz: Gazetteer) -> bool:
    return any(g.geocodable for g in classify_granularity(m, gaz))


def categorize(r: ReleaseRecord, gaz: Optional[Gazetteer] = None) -> TraceCategory:
    """Table-1 category of a release.

    The coder-assigned trace style decides, except that a detailed trace
    section without a single dated, geocodable move counts as non-specific.
    """
    style = r.trace_style
    direct = {
        TraceStyle.MENTION_IN_BODY: TraceCategory.MENTIONS_OF_TRACE,
        TraceStyle.NON_SPECIFIC: TraceCategory.NON_SPECIFIC_TRACE,
        TraceStyle.NO_EXPOSURE: TraceCategory.NO_PUBLIC_EXPOSURE,
        TraceStyle.NOT_AVAILABLE: TraceCategory.NOT_AVAILABLE,
        TraceStyle.OTHER: TraceCategory.OTHERS,
        TraceStyle.NO_CASE_DESCRIPTION: TraceCategory.NO_CASE_DESCRIPTION,
    }
    if style in direct:
        return direct[style]
    gaz = gaz or default_gazetteer()
    for _, _, m in r.all_moves():
        if (m.start or m.end) and _is_geocodable(m, gaz):
            return TraceCategory.DETAILED_TRACE
    return TraceCategory.NON_SPECIFIC_TRACE


@dataclass
class StatsTable:
    """Category by year cross-tabulation with totals."""

    years: list[int]
    cells: dict[TraceCategory, dict[int, int]]

    def row_total(self, c: TraceCategory) -> int:
        return sum(self.cells[c].values())

    def column_total(self, year: int) -> int:
        return sum(self.cells[c][year] for c in TraceCategory)

    @property
    def total(self) -> int:
        return sum(self.row_total(c) for c in TraceCategory)

    def render(self) -> str:
        head = ["", *map(str, self.years), "Total"]
        rows = [head]
        for c in TraceCategory:
            rows.append([c.title, *(str(self.cells[c][y]) for y in self.years), str(self.row_total(c))])
        rows.append(["Yearly total", *(str(self.column_total(y)) for y in self.years), str(self.total)])
        width = max(len(r[0]) for r in rows)
        return "\n".join(
            r[0].ljust(width) + "".join(v.rjust(7) for v in r[1:]) for r in rows) + "\n"

    def to_json(self) -> dict:
        return {
            "years": self.years,
            "rows": [{"category": c.value, "title": c.title,
                      "counts": {str(y): self.cells[c][y] for y in self.years},
                      "total": self.row_total(c)} for c in TraceCategory],
            "yearlyTotals": {str(y): self.column_total(y) for y in self.years},
            "total": self.total,
        }


def stats(corpus: Iterable[ReleaseRecord], gaz: Optional[Gazetteer] = None) -> StatsTable:
    gaz = gaz or default_gazetteer()
    tally = Counter((categorize(r, gaz), r.date_published.year) for r in corpus)
    years = sorted({y for _, y in tally})
    cells = {c: {y: tally.get((c, y), 0) for y in years} for c in TraceCategory}
    return StatsTable(years, cells)


class FailurePattern(str, enum.Enum):
    NEGATION = "negation"
    PROFESSION_IMPLIED = "profession-implied"
    GENERIC_TERM = "generic-term"
    CROSS_REFERENCE = "cross-reference"


def failure_patterns(m: MoveRecord) -> tuple[FailurePattern, ...]:
    tags = []
    if m.negated:
        tags.append(FailurePattern.NEGATION)
    if m.home_reference:
        tags.append(FailurePattern.GENERIC_TERM)
    if m.same_as_case is not None:
        tags.append(FailurePattern.CROSS_REFERENCE)
    if not tags and not m.from_ and not m.to:
        tags.append(FailurePattern.PROFESSION_IMPLIED)
    return tuple(tags)


@dataclass
class EvaluationSummary:
    releases: int = 0
    with_patient_info: int = 0
    with_trace: int = 0
    steps: int = 0
    steps_with_origin_or_destination: int = 0
    granularity: dict[str, int] = field(default_factory=dict)
    step_patterns: dict[str, list[str]] = field(default_factory=dict)

    @property
    def pattern_totals(self) -> dict[str, int]:
        c = Counter(t for tags in self.step_patterns.values() for t in tags)
        return {p.value: c.get(p.value, 0) for p in FailurePattern}

    def to_json(self) -> dict:
        return {
            "releases": self.releases,
            "withPatientInfo": self.with_patient_info,
            "withTrace": self.with_trace,
            "steps": self.steps,
            "stepsWithOriginOrDestination": self.steps_with_origin_or_destination,
            "granularity": self.granularity,
            "patternTotals": self.pattern_totals,
            "stepPatterns": self.step_patterns,
        }

    def render(self) -> str:
        lines = [
            f"releases                        {self.releases}",
            f"with patient information        {self.with_patient_info}",
            f"with dated and located trace    {self.with_trace}",
            f"trace steps                     {self.steps}",
            f"steps with origin/destination   {self.steps_with_origin_or_destination}",
            "granularity                     " + ", ".join(f"{k}: {v}" for k, v in self.granularity.items()),
            "failure patterns                " + ", ".join(f"{k}: {v}" for k, v in self.pattern_totals.items()),
        ]
        return "\n".join(lines) + "\n"


def evaluation_pipeline(corpus: Iterable[ReleaseRecord], gaz: Optional[Gazetteer] = None) -> EvaluationSummary:
    """Expressiveness summary over a corpus of releases.

    A release "has trace" when some move carries a date and at least one
    described endpoint (overseas counts as described). Steps are the moves
    of those releases; each located step contributes its most specific
    endpoint level to the granularity histogram.
    """
    gaz = gaz or default_gazetteer()
    s = EvaluationSummary()
    hist: Counter = Counter()
    for r in corpus:
        s.releases += 1
        if r.patients:
            s.with_patient_info += 1
        moves = list(r.all_moves())
        levels = [step_granularity(m, gaz) for _, _, m in moves]
        if not any((m.start or m.end) and g is not Granularity.NONE for (_, _, m), g in zip(moves, levels)):
            continue
        s.with_trace += 1
        for (i, j, m), g in zip(moves, levels):
            s.steps += 1
            if g is not Granularity.NONE:
                s.steps_with_origin_or_destination += 1
                hist[g] += 1
            tags = failure_patterns(m)
            if tags:
                s.step_patterns[f"{r.release_id}-P{i:02d}-M{j:02d}"] = [t.value for t in tags]
    s.granularity = {g.value: hist[g] for g in sorted(hist, key=lambda g: -g.specificity)}
    return s
