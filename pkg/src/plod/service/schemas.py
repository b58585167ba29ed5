"""Pydantic request/response models for the distribution service."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict
from pydantic.alias_generators import to_camel

from plod.model import Literal, PlodGraph
from plod.query import ntriples_term


class _Camel(BaseModel):
    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True)


class TaggedString(_Camel):
    value: str
    lang: Optional[str] = None
    datatype: Optional[str] = None

    @classmethod
    def of(cls, lit: Optional[Literal]) -> Optional["TaggedString"]:
        if lit is None:
            return None
        return cls(value=lit.lexical, lang=lit.lang, datatype=lit.datatype)


class EventOut(_Camel):
    id: str
    label: Optional[str] = None


class ReportOut(_Camel):
    id: str
    label: Optional[str] = None
    main_entity: Optional[str] = None
    number_of_patients: Optional[int] = None
    date_published: Optional[str] = None
    publisher: Optional[str] = None
    url: Optional[str] = None
    is_referenced_by: Optional[str] = None


class PatientOut(_Camel):
    id: str
    label: Optional[str] = None
    subject_of: Optional[str] = None
    health_condition: Optional[str] = None
    date_confirmed: Optional[str] = None
    age: Optional[str] = None
    gender: Optional[str] = None
    home_location: Optional[str] = None


class MoveOut(_Camel):
    id: str
    label: Optional[str] = None
    agent: Optional[str] = None
    start_time: Optional[str] = None
    end_time: Optional[str] = None
    from_location: Optional[str] = None
    to_location: Optional[str] = None
    instrument: Optional[TaggedString] = None
    raw_text: Optional[str] = None
    negated: bool = False
    derived_from: Optional[str] = None
    inferred: list[str] = []


class PlaceOut(_Camel):
    iri: str
    label: Optional[str] = None


class DiseaseOut(_Camel):
    iri: str
    label: Optional[str] = None
    name: Optional[TaggedString] = None
    infectious_agent: Optional[str] = None
    code: Optional[str] = None


class CodeOut(_Camel):
    iri: str
    code_value: Optional[str] = None
    coding_system: Optional[str] = None


class GraphOut(_Camel):
    """JSON projection of a PLOD graph: one object per entity."""

    events: list[EventOut] = []
    reports: list[ReportOut] = []
    patients: list[PatientOut] = []
    moves: list[MoveOut] = []
    places: list[PlaceOut] = []
    diseases: list[DiseaseOut] = []
    codes: list[CodeOut] = []
    extra_triples: list[str] = []

    @classmethod
    def of(cls, g: PlodGraph) -> "GraphOut":
        def s(v):
            return None if v is None else str(v)

        def d(v):
            return None if v is None else v.lexical

        return cls(
            events=[EventOut(id=e.id.text, label=e.label) for e in sorted(g.events, key=lambda e: e.id)],
            reports=[ReportOut(
                id=r.id.text, label=r.label, main_entity=s(r.main_entity),
                number_of_patients=r.number_of_patients, date_published=d(r.date_published),
                publisher=r.publisher, url=r.url, is_referenced_by=r.is_referenced_by,
            ) for r in sorted(g.reports, key=lambda r: r.id)],
            patients=[PatientOut(
                id=p.id.text, label=p.label, subject_of=s(p.subject_of),
                health_condition=p.health_condition, date_confirmed=d(p.date_confirmed),
                age=p.age, gender=p.gender, home_location=p.home_location,
            ) for p in sorted(g.patients, key=lambda p: p.id)],
            moves=[MoveOut(
                id=m.id.text, label=m.label, agent=s(m.agent),
                start_time=d(m.start_time), end_time=d(m.end_time),
                from_location=m.from_location, to_location=m.to_location,
                instrument=TaggedString.of(m.instrument), raw_text=m.raw_text, negated=m.negated,
                derived_from=s(m.derived_from), inferred=list(m.inferred),
            ) for m in sorted(g.moves, key=lambda m: m.id)],
            places=[PlaceOut(iri=p.iri, label=p.label) for p in sorted(g.places, key=lambda p: p.iri)],
            diseases=[DiseaseOut(
                iri=x.iri, label=x.label, name=TaggedString.of(x.name),
                infectious_agent=x.infectious_agent, code=x.code,
            ) for x in sorted(g.diseases, key=lambda x: x.iri)],
            codes=[CodeOut(iri=c.iri, code_value=c.code_value, coding_system=c.coding_system)
                   for c in sorted(g.codes, key=lambda c: c.iri)],
            extra_triples=sorted(" ".join(ntriples_term(x) for x in t) + " ." for t in g.extra),
        )


class HealthOut(_Camel):
    status: str
    version: int
    strong_validator: Optional[str] = None
    built_at: Optional[str] = None


class IssueOut(_Camel):
    severity: str
    code: str
    subject: str
    message: str


class PublishOut(_Camel):
    version: int
    strong_validator: str
    entities: int
    warnings: list[IssueOut] = []


class ErrorOut(_Camel):
    detail: str
    issues: list[IssueOut] = []
