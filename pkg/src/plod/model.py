"""Typed PLOD entities, the persistent identifier scheme and graph validation.

Every entity in a press release hangs off an event whose identifier is the
release ID. Reports, patients and moves derive their identifiers from it by
appending a kind letter and a counter::

    12202001311            event
    12202001311-R01        report
    12202001311-P01        patient
    12202001311-P01-M02    second move of that patient

Identifiers become URIs under ``https://plod.info/data/``.
"""
from __future__ import annotations

import datetime as dt
import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

DATA_NS = "https://plod.info/data/"
ENTITY_NS = "https://plod.info/entity/"

SCHEMA = "https://schema.org/"
SCHEMA_DATETIME = SCHEMA + "DateTime"
SCHEMA_INTEGER = SCHEMA + "Integer"
SCHEMA_BOOLEAN = SCHEMA + "Boolean"

CODING_SYSTEMS = frozenset({"ICD-10"})


class PidKind(str, enum.Enum):
    EVENT = "Event"
    REPORT = "Report"
    PATIENT = "Patient"
    MOVE = "Move"


_EVENT_RE = r"[A-Za-z0-9]+"
_COUNTER_RE = r"(?:0[1-9]|[1-9][0-9]|[1-9][0-9]{2,})"
_PID_RE = re.compile(
    rf"^(?P<event>{_EVENT_RE})"
    rf"(?:-R(?P<report>{_COUNTER_RE})"
    rf"|-P(?P<patient>{_COUNTER_RE})(?:-M(?P<move>{_COUNTER_RE}))?)?$"
)


class InvalidArgument(ValueError):
    """Raised for out-of-contract arguments (bad counters, malformed PIDs)."""


def pad_counter(n: int) -> str:
    """Render an identifier counter: two digits up to 99, natural width after."""
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise InvalidArgument(f"counter must be a positive integer, got {n!r}")
    return f"{n:02d}"


@dataclass(frozen=True, order=True)
class Pid:
    kind: PidKind
    text: str

    def __post_init__(self):
        parsed = parse_pid(self.text)
        if parsed.kind is not self.kind:
            raise InvalidArgument(f"{self.text!r} is a {parsed.kind.value} PID, not {self.kind.value}")

    def __str__(self) -> str:
        return self.text

    @property
    def event(self) -> "Pid":
        return Pid(PidKind.EVENT, _match(self.text)["event"])

    @property
    def patient(self) -> Optional["Pid"]:
        if self.kind not in (PidKind.PATIENT, PidKind.MOVE):
            return None
        return Pid(PidKind.PATIENT, self.text.rsplit("-M", 1)[0] if self.kind is PidKind.MOVE else self.text)

    @property
    def counters(self) -> tuple[int, ...]:
        """Counters below the event, outermost first (e.g. ``(1, 2)`` for P01-M02)."""
        m = _match(self.text)
        return tuple(int(m[k]) for k in ("report", "patient", "move") if m[k] is not None)

    @property
    def uri(self) -> str:
        return to_uri(self)


def _match(text: str) -> re.Match:
    m = _PID_RE.match(text) if isinstance(text, str) else None
    if m is None:
        raise InvalidArgument(f"malformed PID {text!r}")
    return m


def parse_pid(text: str) -> Pid:
    m = _match(text)
    if m["move"] is not None:
        kind = PidKind.MOVE
    elif m["patient"] is not None:
        kind = PidKind.PATIENT
    elif m["report"] is not None:
        kind = PidKind.REPORT
    else:
        kind = PidKind.EVENT
    pid = object.__new__(Pid)
    object.__setattr__(pid, "kind", kind)
    object.__setattr__(pid, "text", text)
    return pid


def event_id(release_id: str) -> Pid:
    pid = parse_pid(release_id)
    if pid.kind is not PidKind.EVENT:
        raise InvalidArgument(f"release ID must be alphanumeric, got {release_id!r}")
    return pid


def _require(pid: Pid, kind: PidKind) -> None:
    if not isinstance(pid, Pid) or pid.kind is not kind:
        raise InvalidArgument(f"expected a {kind.value} PID, got {pid!r}")


def make_report_id(event: Pid, n: int) -> Pid:
    _require(event, PidKind.EVENT)
    return parse_pid(f"{event.text}-R{pad_counter(n)}")


def make_patient_id(event: Pid, n: int) -> Pid:
    _require(event, PidKind.EVENT)
    return parse_pid(f"{event.text}-P{pad_counter(n)}")


def make_move_id(patient: Pid, n: int) -> Pid:
    _require(patient, PidKind.PATIENT)
    return parse_pid(f"{patient.text}-M{pad_counter(n)}")


def to_uri(pid: Pid) -> str:
    return DATA_NS + pid.text


def parse_uri(uri: str) -> Pid:
    if not isinstance(uri, str) or not uri.startswith(DATA_NS):
        raise InvalidArgument(f"not a PLOD data URI: {uri!r}")
    return parse_pid(uri[len(DATA_NS):])


def entity_uri(name: str) -> str:
    return ENTITY_NS + name


@dataclass(frozen=True, order=True)
class Literal:
    """An RDF literal. ``datatype`` and ``lang`` are mutually exclusive."""

    lexical: str
    datatype: Optional[str] = None
    lang: Optional[str] = None

    def __post_init__(self):
        if self.datatype is not None and self.lang is not None:
            raise InvalidArgument("a literal cannot carry both a datatype and a language tag")


@dataclass(frozen=True)
class PlodDate:
    """A day-precision date that remembers how it was written."""

    day: dt.date
    lexical: str
    datatype: Optional[str] = SCHEMA_DATETIME

    @classmethod
    def of(cls, day: dt.date) -> "PlodDate":
        return cls(day, day.isoformat())

    def literal(self) -> Literal:
        return Literal(self.lexical, self.datatype)


# A location endpoint: an IRI, "" when the release left the object empty, or None when absent.
Location = Optional[str]


def is_located(loc: Location) -> bool:
    return bool(loc)


@dataclass(frozen=True)
class Event:
    id: Pid
    label: Optional[str] = None


@dataclass(frozen=True)
class Report:
    id: Pid
    label: Optional[str] = None
    main_entity: Optional[Pid] = None
    number_of_patients: Optional[int] = None
    date_published: Optional[PlodDate] = None
    publisher: Optional[str] = None
    url: Optional[str] = None
    is_referenced_by: Optional[str] = None


@dataclass(frozen=True)
class Patient:
    id: Pid
    label: Optional[str] = None
    subject_of: Optional[Pid] = None
    health_condition: Optional[str] = None
    date_confirmed: Optional[PlodDate] = None
    age: Optional[str] = None
    gender: Optional[str] = None
    home_location: Optional[str] = None


@dataclass(frozen=True)
class MoveAction:
    id: Pid
    label: Optional[str] = None
    agent: Optional[Pid] = None
    start_time: Optional[PlodDate] = None
    end_time: Optional[PlodDate] = None
    from_location: Location = None
    to_location: Location = None
    instrument: Optional[Literal] = None
    raw_text: Optional[str] = None
    negated: bool = False
    derived_from: Optional[Pid] = None
    inferred: tuple[str, ...] = ()

    @property
    def interval(self) -> Optional[tuple[dt.date, dt.date]]:
        """Day interval of the move; a single known bound stands for both."""
        start = self.start_time.day if self.start_time else None
        end = self.end_time.day if self.end_time else None
        if start is None and end is None:
            return None
        return (start or end, end or start)


@dataclass(frozen=True)
class Place:
    iri: str
    label: Optional[str] = None


@dataclass(frozen=True)
class MedicalCode:
    iri: str
    code_value: Optional[str] = None
    coding_system: Optional[str] = None


@dataclass(frozen=True)
class InfectiousDisease:
    iri: str
    label: Optional[str] = None
    name: Optional[Literal] = None
    infectious_agent: Optional[str] = None
    code: Optional[str] = None


Entity = Union[Event, Report, Patient, MoveAction, Place, InfectiousDisease, MedicalCode]


def entity_key(e: Entity) -> str:
    """The IRI an entity is published under."""
    if isinstance(e, (Place, InfectiousDisease, MedicalCode)):
        return e.iri
    return to_uri(e.id)


@dataclass(frozen=True)
class PlodGraph:
    """Immutable collection of PLOD entities.

    Collections are tuples, not mappings, so that merged graphs can carry
    duplicate identifiers for :func:`validate_graph` to report. ``extra``
    holds triples the typed model does not cover; they are kept so that
    nothing read from Turtle is ever dropped.
    """

    events: tuple[Event, ...] = ()
    reports: tuple[Report, ...] = ()
    patients: tuple[Patient, ...] = ()
    moves: tuple[MoveAction, ...] = ()
    places: tuple[Place, ...] = ()
    diseases: tuple[InfectiousDisease, ...] = ()
    codes: tuple[MedicalCode, ...] = ()
    extra: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("events", "reports", "patients", "moves", "places", "diseases", "codes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "extra", frozenset(self.extra))

    def entities(self) -> Iterator[Entity]:
        yield from self.events
        yield from self.reports
        yield from self.patients
        yield from self.moves
        yield from self.places
        yield from self.diseases
        yield from self.codes

    def counts(self) -> tuple[int, ...]:
        return (len(self.events), len(self.reports), len(self.patients), len(self.moves),
                len(self.places), len(self.diseases), len(self.codes))

    def __len__(self) -> int:
        return sum(self.counts())

    def by_key(self) -> dict[str, Entity]:
        """Entities indexed by published IRI (first occurrence wins)."""
        out: dict[str, Entity] = {}
        for e in self.entities():
            out.setdefault(entity_key(e), e)
        return out

    def moves_of(self, patient: Pid) -> list[MoveAction]:
        return [m for m in self.moves if m.agent == patient]


def merge_graphs(graphs: Iterable[PlodGraph]) -> PlodGraph:
    """Concatenate graphs, dropping entities that are exact duplicates."""
    buckets: dict[str, dict] = {k: {} for k in
                                ("events", "reports", "patients", "moves", "places", "diseases", "codes")}
    extra: set = set()
    for g in graphs:
        for name, seen in buckets.items():
            seen.update(dict.fromkeys(getattr(g, name)))
        extra |= g.extra
    return PlodGraph(**{k: tuple(v) for k, v in buckets.items()}, extra=frozenset(extra))


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


class IssueCode(str, enum.Enum):
    MISSING_LOCATION = "MISSING_LOCATION"
    DANGLING_REF = "DANGLING_REF"
    DUPLICATE_PID = "DUPLICATE_PID"
    BAD_INTERVAL = "BAD_INTERVAL"
    EMPTY_LABEL = "EMPTY_LABEL"
    COUNT_MISMATCH = "COUNT_MISMATCH"
    # raised by the Turtle reader, never by validate_graph
    NO_PLOD_SUBJECTS = "NO_PLOD_SUBJECTS"
    UNRECOGNIZED_SUBJECT = "UNRECOGNIZED_SUBJECT"


_SEVERITY = {
    IssueCode.MISSING_LOCATION: Severity.WARNING,
    IssueCode.EMPTY_LABEL: Severity.WARNING,
    IssueCode.COUNT_MISMATCH: Severity.WARNING,
    IssueCode.NO_PLOD_SUBJECTS: Severity.WARNING,
    IssueCode.UNRECOGNIZED_SUBJECT: Severity.WARNING,
    IssueCode.DANGLING_REF: Severity.ERROR,
    IssueCode.DUPLICATE_PID: Severity.ERROR,
    IssueCode.BAD_INTERVAL: Severity.ERROR,
}


@dataclass(frozen=True)
class ValidationIssue:
    code: IssueCode
    subject: str
    message: str

    @property
    def severity(self) -> Severity:
        return _SEVERITY[self.code]

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def __str__(self) -> str:
        return f"{self.severity.value} {self.code.value} {self.subject} {self.message}"


def _subject(e: Entity) -> str:
    return e.id.text if hasattr(e, "id") else e.iri


def validate_graph(g: PlodGraph) -> list[ValidationIssue]:
    """Check a graph; never raises. Issues come back in a stable order."""
    issues: list[ValidationIssue] = []

    def add(code, e, message):
        issues.append(ValidationIssue(code, _subject(e), message))

    key_counts = Counter(entity_key(e) for e in g.entities())
    for key, n in sorted(key_counts.items()):
        if n > 1:
            subject = key[len(DATA_NS):] if key.startswith(DATA_NS) else key
            issues.append(ValidationIssue(IssueCode.DUPLICATE_PID, subject,
                                          f"{n} entities share this identifier"))

    event_ids = {e.id for e in g.events}
    patient_ids = {p.id for p in g.patients}
    place_iris = {p.iri for p in g.places}
    disease_iris = {d.iri for d in g.diseases}
    code_iris = {c.iri for c in g.codes}

    def check_ref(e, prop, value, pool, what):
        if value is not None and value not in pool:
            add(IssueCode.DANGLING_REF, e, f"{prop} refers to missing {what} {value}")

    for e in g.entities():
        label = getattr(e, "label", None)
        if label == "" or (isinstance(e, Place) and label is None):
            add(IssueCode.EMPTY_LABEL, e, "label is empty")

    for r in g.reports:
        check_ref(r, "mainEntity", r.main_entity, event_ids, "event")
        check_ref(r, "publisher", r.publisher, place_iris, "place")
    for p in g.patients:
        check_ref(p, "subjectOf", p.subject_of, event_ids, "event")
        check_ref(p, "healthCondition", p.health_condition, disease_iris, "disease")
        check_ref(p, "homeLocation", p.home_location or None, place_iris, "place")
    for m in g.moves:
        check_ref(m, "agent", m.agent, patient_ids, "patient")
        for prop, loc in (("fromLocation", m.from_location), ("toLocation", m.to_location)):
            if is_located(loc):
                check_ref(m, prop, loc, place_iris, "place")
            else:
                add(IssueCode.MISSING_LOCATION, m, f"{prop} is {'empty' if loc == '' else 'absent'}")
        if m.start_time and m.end_time and m.start_time.day > m.end_time.day:
            add(IssueCode.BAD_INTERVAL, m,
                f"startTime {m.start_time.lexical} is after endTime {m.end_time.lexical}")
    for d in g.diseases:
        check_ref(d, "code", d.code, code_iris, "medical code")
        if d.iri.startswith(ENTITY_NS) and d.code is None:
            add(IssueCode.DANGLING_REF, d, "PLOD disease entity has no medical code")

    attached = Counter(p.subject_of for p in g.patients if p.subject_of is not None)
    for r in g.reports:
        if r.number_of_patients is not None and r.main_entity is not None:
            n = attached.get(r.main_entity, 0)
            if r.number_of_patients < n:
                add(IssueCode.COUNT_MISMATCH, r,
                    f"numberOfPatients is {r.number_of_patients} but {n} patients are attached")
    return issues


def errors(issues: Iterable[ValidationIssue]) -> list[ValidationIssue]:
    return [i for i in issues if i.is_error]
